// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benefit, false alarm rate and the area under the Benefit–FAR curve.
//!
//! A score stream is a list of `(t, score)` pairs; steps without a score
//! (for example the first step of a difference detector) are simply absent.
//! An alarm is raised at every step whose score is strictly above the
//! threshold, so the FAR counts alarming steps.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default benefit horizon.
pub const DEFAULT_HORIZON: usize = 10;
/// Default number of quantiles in a threshold grid.
pub const DEFAULT_GRID_SIZE: usize = 101;

/// `1 - (t̂ - t*)/U` when `t* ≤ t̂ < t* + U`, otherwise 0.
pub fn benefit(t_hat: Option<usize>, t_star: usize, horizon: usize) -> f64 {
    match t_hat {
        Some(t) if t >= t_star && t < t_star + horizon => 1.0 - (t - t_star) as f64 / horizon as f64,
        _ => 0.0,
    }
}

/// Fraction of alarms outside every inclusive transition interval; 0 when
/// there are no alarms.
pub fn far(alarms: &[usize], transitions: &[(usize, usize)]) -> f64 {
    if alarms.is_empty() {
        return 0.0;
    }
    let outside = alarms
        .iter()
        .filter(|&&t| !transitions.iter().any(|&(a, b)| a <= t && t <= b))
        .count();
    outside as f64 / alarms.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Benefit horizon `U`.
    #[serde(rename = "U")]
    pub horizon: usize,
    pub sign_times: Vec<usize>,
    pub transitions: Vec<(usize, usize)>,
    /// Explicit thresholds; when absent a quantile grid of the scores is used.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
}

impl EvalConfig {
    pub fn new(horizon: usize, sign_times: Vec<usize>, transitions: Vec<(usize, usize)>) -> Self {
        Self {
            horizon,
            sign_times,
            transitions,
            thresholds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("benefit horizon U must be >= 1"));
        }
        if self.sign_times.is_empty() {
            return Err(Error::config("at least one sign time is needed"));
        }
        if self.sign_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sign times must be strictly increasing"));
        }
        if let Some(th) = &self.thresholds {
            if th.is_empty() {
                return Err(Error::config("threshold grid is empty"));
            }
            if th.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config("threshold grid must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// `count` evenly spaced quantiles (linear interpolation between order
/// statistics) of the finite scores, with duplicates removed.
pub fn quantile_grid(scores: &[f64], count: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    if sorted.is_empty() || count == 0 {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let mut grid: Vec<f64> = (0..count)
        .map(|i| {
            let q = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            let pos = q * last;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect();
    grid.dedup_by(|a, b| a <= b);
    grid
}

/// Steps whose score is strictly above `threshold`.
pub fn alarms_at(scores: &[(usize, f64)], threshold: f64) -> Vec<usize> {
    scores.iter().filter(|(_, s)| *s > threshold).map(|&(t, _)| t).collect()
}

/// Benefit of each change point: the first alarm at or after its sign time
/// and before the next one.
pub fn per_change_benefits(alarms: &[usize], sign_times: &[usize], horizon: usize) -> Vec<f64> {
    sign_times
        .iter()
        .enumerate()
        .map(|(i, &t_star)| {
            let next = sign_times.get(i + 1).copied().unwrap_or(usize::MAX);
            let first = alarms.iter().copied().filter(|&t| t >= t_star && t < next).min();
            benefit(first, t_star, horizon)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    /// Mean of `per_change`.
    pub benefit: f64,
    pub per_change: Vec<f64>,
    pub alarms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitFarCurve {
    /// Sorted by `(far, benefit)`.
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

/// Trapezoidal area under `(far, benefit)` points, extended horizontally to
/// FAR = 0 and FAR = 1 from the first and last points.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let Some(&(f0, b0)) = pts.first() else {
        return 0.0;
    };
    let mut area = f0 * b0;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    let &(fl, bl) = pts.last().expect("non-empty");
    area += (1.0 - fl) * bl;
    area
}

/// Sweeps the thresholds and returns the curve and its AUC.
pub fn benefit_far_auc(scores: &[(usize, f64)], config: &EvalConfig) -> Result<BenefitFarCurve> {
    config.validate()?;
    let thresholds = match &config.thresholds {
        Some(t) => t.clone(),
        None => {
            let values: Vec<f64> = scores.iter().map(|&(_, s)| s).collect();
            quantile_grid(&values, DEFAULT_GRID_SIZE)
        }
    };
    if thresholds.is_empty() {
        return Err(Error::config(format!(
            "threshold grid is empty ({} scores)",
            scores.len()
        )));
    }
    let mut points: Vec<CurvePoint> = thresholds
        .iter()
        .map(|&threshold| {
            let alarms = alarms_at(scores, threshold);
            let per_change = per_change_benefits(&alarms, &config.sign_times, config.horizon);
            CurvePoint {
                threshold,
                far: far(&alarms, &config.transitions),
                benefit: per_change.iter().sum::<f64>() / per_change.len() as f64,
                per_change,
                alarms: alarms.len(),
            }
        })
        .collect();
    points.sort_by(|a, b| a.far.total_cmp(&b.far).then(a.benefit.total_cmp(&b.benefit)));
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.far, p.benefit)).collect();
    let area = auc(&pairs);
    Ok(BenefitFarCurve { points, auc: area })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
