// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model-change and change-sign detectors.
//!
//! Every detector produces a score per step; an alarm is raised when the
//! score strictly exceeds a threshold. Scores are kept even when no alarm is
//! raised so that threshold sweeps can be replayed offline.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selector::transition_prior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// `|Ddim - k̂|`.
    Th,
    /// `|Ddim_t - Ddim_{t-1}|`.
    Diff,
    /// 1 when the sequential dynamic model selection output changes.
    Sdms,
    /// 1 when the fixed-share best expert changes.
    Fs,
    /// TH with fixed-share weights in place of the posterior.
    FswTh,
    /// Diff with fixed-share weights in place of the posterior.
    FswDiff,
    /// Entropy of the model posterior.
    Se,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 7] = [
        DetectorKind::Th,
        DetectorKind::Diff,
        DetectorKind::Sdms,
        DetectorKind::Fs,
        DetectorKind::FswTh,
        DetectorKind::FswDiff,
        DetectorKind::Se,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Th => "th",
            DetectorKind::Diff => "diff",
            DetectorKind::Sdms => "sdms",
            DetectorKind::Fs => "fs",
            DetectorKind::FswTh => "fsw_th",
            DetectorKind::FswDiff => "fsw_diff",
            DetectorKind::Se => "se",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown detector '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub t: usize,
    pub detector: DetectorKind,
    pub score: f64,
    pub threshold: f64,
}

/// Emits an alarm when `score > threshold`.
pub fn check_alarm(t: usize, detector: DetectorKind, score: f64, threshold: f64) -> Option<AlarmEvent> {
    (score > threshold).then_some(AlarmEvent {
        t,
        detector,
        score,
        threshold,
    })
}

/// Sequential dynamic model selection:
/// `argmin_k { L_k - λ ln p(k | k_prev) }`.
///
/// Without a previous estimate the penalty is dropped. Ties go to `k_prev`,
/// then to the smaller index.
pub fn sdms_step(codelengths: &[f64], k_prev: Option<usize>, gamma: f64, lambda: f64) -> Result<usize> {
    let max_k = codelengths.len();
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in codelengths.iter().enumerate() {
        let k = i + 1;
        if !l.is_finite() {
            continue;
        }
        let penalty = match k_prev {
            None => 0.0,
            Some(prev) => {
                let p = transition_prior(k, prev, gamma, max_k)?;
                if p == 0.0 {
                    if lambda == 0.0 {
                        0.0
                    } else {
                        continue;
                    }
                } else {
                    -lambda * p.ln()
                }
            }
        };
        let score = l + penalty;
        let better = match best {
            None => true,
            Some((bk, bs)) => score < bs || (score == bs && Some(k) == k_prev && Some(bk) != k_prev),
        };
        if better {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k).ok_or(Error::NoValidModel)
}

/// `|Ddim - k̂|`.
pub fn th_score(ddim: f64, k_hat: usize) -> f64 {
    (ddim - k_hat as f64).abs()
}

/// `|Ddim_t - Ddim_{t-1}|`; undefined on the first step.
pub fn diff_score(ddim: f64, ddim_prev: Option<f64>) -> Option<f64> {
    ddim_prev.map(|p| (ddim - p).abs())
}

pub fn se_alarm(t: usize, entropy: f64, threshold: f64) -> Option<AlarmEvent> {
    check_alarm(t, DetectorKind::Se, entropy, threshold)
}

/// Fixed-share expert tracking over models `k = 1..=K`, each expert's loss
/// being its codelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedShareState {
    /// Normalized weights, `weights[k - 1]`.
    pub weights: Vec<f64>,
    /// Sharing rate in `(0, 1)`.
    pub alpha: f64,
    /// Learning rate.
    pub beta: f64,
}

impl FixedShareState {
    pub fn uniform(max_k: usize, alpha: f64, beta: f64) -> Self {
        Self {
            weights: alloc::vec![1.0 / max_k as f64; max_k],
            alpha,
            beta,
        }
    }

    /// Index of the heaviest expert; ties go to the smaller index.
    pub fn best_expert(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best + 1
    }

    /// Exponential loss update (in log domain) followed by the share step
    /// `(1-α) u_k + α/(K-1) Σ_{l≠k} u_l`.
    pub fn update(&mut self, losses: &[f64]) -> Result<()> {
        let k = self.weights.len();
        if losses.len() != k {
            return Err(Error::config(format!("{} losses for {k} experts", losses.len())));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) || !(self.beta > 0.0) {
            return Err(Error::config(format!(
                "fixed share needs alpha in [0, 1) and beta > 0, got ({}, {})",
                self.alpha, self.beta
            )));
        }
        let log_u: Vec<f64> = self
            .weights
            .iter()
            .zip(losses)
            .map(|(&w, &l)| {
                if w > 0.0 && l.is_finite() {
                    w.ln() - self.beta * l
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let norm = crate::special::log_sum_exp(&log_u);
        if !norm.is_finite() {
            // Every expert underflowed: restart from uniform.
            self.weights.iter_mut().for_each(|w| *w = 1.0 / k as f64);
            return Ok(());
        }
        let u: Vec<f64> = log_u.iter().map(|&v| (v - norm).exp()).collect();
        self.weights = share(&u, self.alpha);
        Ok(())
    }
}

/// The share step alone; preserves the total mass of `u`.
pub fn share(u: &[f64], alpha: f64) -> Vec<f64> {
    let k = u.len();
    if k < 2 {
        return u.to_vec();
    }
    let total: f64 = u.iter().sum();
    let spread = alpha / (k - 1) as f64;
    u.iter().map(|&w| (1.0 - alpha) * w + spread * (total - w)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FswScores {
    /// Weight-averaged model index.
    pub ddim: f64,
    /// `|ddim - k̂|`.
    pub th: f64,
    /// `|ddim - ddim_prev|`, absent on the first step.
    pub diff: Option<f64>,
}

/// TH/Diff computed with fixed-share weights in place of the posterior.
pub fn fsw_scores(state: &FixedShareState, k_hat: usize, prev_ddim: Option<f64>) -> FswScores {
    let total: f64 = state.weights.iter().sum();
    let ddim = state
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| w / total * (i + 1) as f64)
        .sum();
    FswScores {
        ddim,
        th: th_score(ddim, k_hat),
        diff: diff_score(ddim, prev_ddim),
    }
}
