// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::PathBuf;

use ddim_core::ar::ArNmlOptions;
use ddim_core::detectors::DetectorKind;
use ddim_core::pipeline::{default_thresholds, GmmSourceOptions, ScorerConfig};
use ddim_core::ComplexityConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Mixture size bound used when none is given.
pub const DEFAULT_K_MAX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian mixtures; `k` is the number of components.
    Gmm,
    /// Univariate autoregression; `k` is the order.
    Ar,
}

/// Everything a run depends on besides the stream and the cache contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: Family,
    pub k_max: usize,
    /// Detectors whose alarms are reported. Scores of all detectors are
    /// always traced.
    pub detectors: Vec<DetectorKind>,
    pub thresholds: BTreeMap<DetectorKind, f64>,
    pub seed: u64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub gmm: GmmSourceOptions,
    /// Values preceding each window; `max(100, 2K + 10)` when absent.
    #[serde(default)]
    pub ar_history: Option<usize>,
    #[serde(default)]
    pub ar_nml: ArNmlOptions,
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn new(family: Family, k_max: usize, seed: u64) -> Self {
        Self {
            family,
            k_max,
            detectors: DetectorKind::ALL.to_vec(),
            thresholds: default_thresholds(),
            seed,
            lambda: 1.0,
            input: None,
            cache: None,
            output: None,
            gmm: GmmSourceOptions::default(),
            ar_history: None,
            ar_nml: ArNmlOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(AppError::Usage("k_max must be at least 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(AppError::Usage("at least one detector is required".into()));
        }
        for d in &self.detectors {
            match self.thresholds.get(d) {
                Some(th) if th.is_finite() => {}
                Some(th) => return Err(AppError::Usage(format!("threshold of {d} is {th}"))),
                None => return Err(AppError::Usage(format!("no threshold for detector {d}"))),
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(AppError::Usage(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Checks a complexity table against the run and the stream.
    pub fn check_complexity(&self, cfg: &ComplexityConfig, dim: usize, max_batch: usize) -> Result<()> {
        let mismatch = |detail: String| AppError::Core(ddim_core::Error::Config(detail));
        if cfg.dim != dim {
            return Err(mismatch(format!("cache is for m = {}, stream has m = {dim}", cfg.dim)));
        }
        if cfg.n_max < max_batch {
            return Err(mismatch(format!(
                "cache covers n <= {}, stream has a batch of {max_batch}",
                cfg.n_max
            )));
        }
        if cfg.k_max != self.k_max {
            return Err(mismatch(format!("cache is for k_max = {}, run uses {}", cfg.k_max, self.k_max)));
        }
        Ok(())
    }

    pub fn scorer_config(&self, dim: usize) -> ScorerConfig {
        let mut sc = ScorerConfig::new(self.k_max);
        sc.lambda = self.lambda;
        sc.mixture_dim = (self.family == Family::Gmm).then_some(dim);
        sc.thresholds = self
            .detectors
            .iter()
            .filter_map(|d| self.thresholds.get(d).map(|&th| (*d, th)))
            .collect();
        sc
    }
}

/// Parses a comma separated detector list such as `th,sdms,fsw-th`, or `all`.
pub fn parse_detectors(list: &str) -> Result<Vec<DetectorKind>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(DetectorKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let d: DetectorKind = name
            .parse()
            .map_err(|_| AppError::Usage(format!("unknown detector {name:?}")))?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    if out.is_empty() {
        return Err(AppError::Usage("empty detector list".into()));
    }
    Ok(out)
}
