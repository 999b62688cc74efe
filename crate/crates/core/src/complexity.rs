// SPDX-License-Identifier: MIT OR Apache-2.0

//! Parametric complexity of the complete-variable Gaussian mixture model.
//!
//! The complexity upper bound is a sum over compositions `n_1 + … + n_k = n`
//! of multinomial-weighted per-cluster factors. Writing
//! `T_1(h) = h^h · c(h) / h!` for the per-cluster factor `c(h)`, the sum
//! factorizes as the `k`-fold convolution
//!
//! ```text
//! C_n(k) = n! / n^n · T_k(n),   T_k(n) = Σ_r T_1(r) · T_{k-1}(n - r)
//! ```
//!
//! which fills a whole `(n, k)` table in `O(n_max² · k_max)`. All values are
//! natural logarithms and every sum is a log-sum-exp.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::E;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_factorial, log_gamma, log_multivariate_gamma, xlogx};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConfig {
    /// Data dimension `m`.
    #[serde(rename = "m")]
    pub dim: usize,
    /// Bound `R` on the squared norm of every component mean.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Lower bound `ε` on covariance eigenvalues.
    pub eps: f64,
    pub n_max: usize,
    pub k_max: usize,
}

impl ComplexityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("m must be >= 1"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config(format!("R must be positive, got {}", self.radius)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.n_max < self.dim + 1 {
            return Err(Error::config(format!(
                "n_max = {} must be at least m + 1 = {}",
                self.n_max,
                self.dim + 1
            )));
        }
        if self.k_max == 0 {
            return Err(Error::config("k_max must be >= 1"));
        }
        Ok(())
    }

    /// Smallest cluster size that carries mass: `m + 2`.
    #[inline]
    pub fn min_cluster_size(&self) -> usize {
        self.dim + 2
    }

    /// `ln B(m, R, ε)`.
    pub fn log_b(&self) -> f64 {
        let m = self.dim as f64;
        (m + 1.0) * 2f64.ln() + m / 2.0 * self.radius.ln() - m * m / 2.0 * self.eps.ln()
            - (m + 1.0) * m.ln()
            - log_gamma(m / 2.0).expect("m/2 > 0")
    }
}

/// Log of the per-cluster factor `B(m,R,ε) · (h/2e)^{mh/2} / Γ_m((h-1)/2)`.
///
/// Clusters with `h <= m + 1` points are excluded and return `-∞`.
pub fn log_cluster_term(h: usize, config: &ComplexityConfig) -> f64 {
    if h < config.min_cluster_size() {
        return f64::NEG_INFINITY;
    }
    let m = config.dim as f64;
    let hf = h as f64;
    config.log_b() + m * hf / 2.0 * (hf / (2.0 * E)).ln()
        - log_multivariate_gamma(config.dim, (hf - 1.0) / 2.0)
            .expect("h >= m + 2 keeps the argument above (m-1)/2")
}

/// `ln T_1(h)` for `h = 0..=n_max`.
fn log_single_column(config: &ComplexityConfig, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|h| {
            let cluster = log_cluster_term(h, config);
            if cluster == f64::NEG_INFINITY {
                cluster
            } else {
                xlogx(h as f64) - log_factorial(h) + cluster
            }
        })
        .collect()
}

/// `ln T_k` from `ln T_1` and `ln T_{k-1}`; `first_live` is the first index
/// where `ln T_1` is finite.
fn convolve(single: &[f64], prev: &[f64], first_live: usize, scratch: &mut Vec<f64>) -> Vec<f64> {
    let len = single.len();
    let mut out = vec![f64::NEG_INFINITY; len];
    for (n, slot) in out.iter_mut().enumerate() {
        scratch.clear();
        let mut max = f64::NEG_INFINITY;
        for r in first_live..=n {
            let v = single[r] + prev[n - r];
            if v > max {
                max = v;
            }
            scratch.push(v);
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let sum: f64 = scratch.iter().map(|&v| (v - max).exp()).sum();
        *slot = max + sum.ln();
    }
    out
}

fn to_log_complexity(log_t: &[f64]) -> Vec<f64> {
    log_t
        .iter()
        .enumerate()
        .map(|(n, &lt)| {
            if lt == f64::NEG_INFINITY {
                lt
            } else {
                log_factorial(n) - xlogx(n as f64) + lt
            }
        })
        .collect()
}

/// `ln C_n(k)` for a single `(n, k)`, without building a cache.
pub fn log_parametric_complexity_gmm(n: usize, k: usize, config: &ComplexityConfig) -> Result<f64> {
    config.validate()?;
    if k == 0 || k > config.k_max || n > config.n_max {
        return Err(Error::Range {
            n,
            k,
            n_max: config.n_max,
            k_max: config.k_max,
        });
    }
    let single = log_single_column(config, n);
    let first_live = config.min_cluster_size().min(n + 1);
    let mut scratch = Vec::with_capacity(n + 1);
    let mut current = single.clone();
    for _ in 1..k {
        current = convolve(&single, &current, first_live, &mut scratch);
    }
    Ok(to_log_complexity(&current)[n])
}

/// Table of `ln C_h(k)` for `h = 0..=n_max`, `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCache {
    config: ComplexityConfig,
    /// Column-major by `k`: entry `(h, k)` lives at `(k - 1) * (n_max + 1) + h`.
    table: Vec<f64>,
}

impl ComplexityCache {
    pub fn build(config: ComplexityConfig) -> Result<Self> {
        config.validate()?;
        let width = config.n_max + 1;
        let single = log_single_column(&config, config.n_max);
        let first_live = config.min_cluster_size().min(width);
        let mut scratch = Vec::with_capacity(width);
        let mut table = Vec::with_capacity(width * config.k_max);
        table.extend(to_log_complexity(&single));
        let mut current = single.clone();
        for _ in 2..=config.k_max {
            current = convolve(&single, &current, first_live, &mut scratch);
            table.extend(to_log_complexity(&current));
        }
        Ok(Self { config, table })
    }

    /// Rebuilds a cache from stored parts, checking the table shape.
    pub fn from_parts(config: ComplexityConfig, table: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = (config.n_max + 1) * config.k_max;
        if table.len() != expected {
            return Err(Error::config(format!(
                "complexity table has {} entries, expected {expected}",
                table.len()
            )));
        }
        Ok(Self { config, table })
    }

    pub fn config(&self) -> &ComplexityConfig {
        &self.config
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `ln C_n(k)`.
    pub fn log_complexity(&self, n: usize, k: usize) -> Result<f64> {
        let c = &self.config;
        if k == 0 || k > c.k_max || n > c.n_max {
            return Err(Error::Range {
                n,
                k,
                n_max: c.n_max,
                k_max: c.k_max,
            });
        }
        Ok(self.table[(k - 1) * (c.n_max + 1) + n])
    }
}
