// SPDX-License-Identifier: MIT OR Apache-2.0

//! Continuous model selection: annealed posterior over the model index and
//! the descriptive dimensionality derived from it.
//!
//! Model indices are 1-based (`k = 1..=K`); vectors over models are indexed
//! by `k - 1`. Codelengths and probabilities use natural logarithms.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::xlogx;

/// Beta prior on the switching rate used by the MAP estimate of `γ`.
pub const DEFAULT_BETA_PRIOR: (f64, f64) = (2.0, 10.0);

const GAMMA_CLAMP: f64 = 1e-6;

/// `p(k | k_prev)`: stay with `1 - γ` (or `1 - γ/2` at either end of
/// `1..=K`), move one step with `γ/2`, anything else has zero mass.
pub fn transition_prior(k: usize, k_prev: usize, gamma: f64, max_k: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain("transition_prior", format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if k == 0 || k_prev == 0 || k > max_k || k_prev > max_k {
        return Err(Error::domain(
            "transition_prior",
            format!("k = {k}, k_prev = {k_prev} must lie in 1..={max_k}"),
        ));
    }
    if max_k == 1 {
        return Ok(1.0);
    }
    let at_boundary = k_prev == 1 || k_prev == max_k;
    Ok(if k == k_prev {
        if at_boundary {
            1.0 - gamma / 2.0
        } else {
            1.0 - gamma
        }
    } else if k.abs_diff(k_prev) == 1 {
        gamma / 2.0
    } else {
        0.0
    })
}

/// `ln p(k | k_prev)` for every `k`, or a uniform row when there is no
/// previous estimate.
pub fn log_prior_row(k_prev: Option<usize>, gamma: f64, max_k: usize) -> Result<Vec<f64>> {
    match k_prev {
        None => Ok(alloc::vec![-(max_k as f64).ln(); max_k]),
        Some(prev) => (1..=max_k)
            .map(|k| transition_prior(k, prev, gamma, max_k).map(f64::ln))
            .collect(),
    }
}

/// MAP estimate of the switching rate under a `Beta(a, b)` prior after
/// `changes` switches in `t` steps, clamped into the open unit interval.
pub fn gamma_map(changes: usize, t: usize, a: f64, b: f64) -> f64 {
    let raw = (changes as f64 + a - 1.0) / (t as f64 + a + b - 2.0);
    raw.clamp(GAMMA_CLAMP, 1.0 - GAMMA_CLAMP)
}

/// Annealing temperature `1/√n` for a batch of `n` observations.
pub fn temperature(n: usize) -> f64 {
    1.0 / (n.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    /// `probs[k - 1] = p(k | y_t)`.
    pub probs: Vec<f64>,
    pub t: usize,
}

impl ModelPosterior {
    pub fn new(probs: Vec<f64>, t: usize) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::config("posterior entries must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("posterior sums to {total}")));
        }
        Ok(Self { probs, t })
    }

    pub fn point_mass(k: usize, max_k: usize, t: usize) -> Self {
        let mut probs = alloc::vec![0.0; max_k];
        probs[k - 1] = 1.0;
        Self { probs, t }
    }

    pub fn max_k(&self) -> usize {
        self.probs.len()
    }

    /// Most probable model index; ties go to the smaller index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// `p(k | y_t) ∝ exp(-β L_k + β ln p(k | k_prev))`, normalized in log domain.
///
/// `codelengths[k - 1]` is `L_NML(y_t; k)` in nats. An infinite codelength or
/// zero prior mass yields zero posterior mass.
pub fn model_posterior(
    codelengths: &[f64],
    k_prev: Option<usize>,
    gamma: f64,
    beta: f64,
    t: usize,
) -> Result<ModelPosterior> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain("model_posterior", format!("beta = {beta} must be positive")));
    }
    if codelengths.iter().any(|l| l.is_nan()) {
        return Err(Error::domain("model_posterior", "codelength is NaN"));
    }
    let log_prior = log_prior_row(k_prev, gamma, codelengths.len())?;
    let scores: Vec<f64> = codelengths
        .iter()
        .zip(&log_prior)
        .map(|(&l, &lp)| {
            if l == f64::INFINITY || lp == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                beta * (lp - l)
            }
        })
        .collect();
    let norm = crate::special::log_sum_exp(&scores);
    if !norm.is_finite() {
        return Err(Error::NoValidModel);
    }
    let probs = scores.iter().map(|&s| (s - norm).exp()).collect();
    Ok(ModelPosterior { probs, t })
}

/// Normalized Ddim: `Σ_k p(k) · k`.
pub fn ddim(posterior: &ModelPosterior) -> f64 {
    posterior
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * (i + 1) as f64)
        .sum()
}

/// Free-parameter count per Gaussian component in `m` dimensions,
/// `m²/2 + 5m/2`.
pub fn gmm_params_per_component(m: usize) -> f64 {
    let m = m as f64;
    m * m / 2.0 + 2.5 * m
}

/// Unnormalized Ddim of a GMM fusion: `Σ_k p(k) · (k f(m) - 1)`.
pub fn ddim_unnormalized(posterior: &ModelPosterior, m: usize) -> f64 {
    let f = gmm_params_per_component(m);
    posterior
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * ((i + 1) as f64 * f - 1.0))
        .sum()
}

/// Shannon entropy of the posterior in nats (`0 ln 0 = 0`).
pub fn structural_entropy(posterior: &ModelPosterior) -> f64 {
    -posterior.probs.iter().map(|&p| xlogx(p)).sum::<f64>()
}

/// Per-stream selector state: the previous discrete estimate, how many
/// times it has changed, and the hyperparameters of the switching prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    pub k_prev: Option<usize>,
    pub changes: usize,
    pub t: usize,
    pub a: f64,
    pub b: f64,
    pub max_k: usize,
}

impl SelectorState {
    pub fn new(max_k: usize) -> Self {
        Self {
            k_prev: None,
            changes: 0,
            t: 0,
            a: DEFAULT_BETA_PRIOR.0,
            b: DEFAULT_BETA_PRIOR.1,
            max_k,
        }
    }

    /// `γ̂` for the step about to be processed.
    pub fn gamma(&self) -> f64 {
        gamma_map(self.changes, self.t + 1, self.a, self.b)
    }

    /// Records the discrete estimate chosen for the step just processed.
    pub fn advance(&mut self, k_hat: usize) {
        if self.k_prev.is_some_and(|p| p != k_hat) {
            self.changes += 1;
        }
        self.k_prev = Some(k_hat);
        self.t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn transition_prior_cases() {
        assert!((transition_prior(3, 3, 0.2, 10).unwrap() - 0.8).abs() < 1e-15);
        assert!((transition_prior(1, 1, 0.2, 10).unwrap() - 0.9).abs() < 1e-15);
        assert!((transition_prior(2, 1, 0.2, 10).unwrap() - 0.1).abs() < 1e-15);
        assert!((transition_prior(10, 10, 0.2, 10).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(transition_prior(5, 3, 0.2, 10).unwrap(), 0.0);
        assert!(transition_prior(1, 1, 0.0, 10).is_err());
        assert!(transition_prior(1, 1, 1.0, 10).is_err());
        assert!(transition_prior(11, 1, 0.5, 10).is_err());
        assert_eq!(transition_prior(1, 1, 0.3, 1).unwrap(), 1.0);
    }

    #[test]
    fn gamma_map_values() {
        assert!((gamma_map(0, 1, 2.0, 10.0) - 1.0 / 11.0).abs() < 1e-15);
        assert!((gamma_map(3, 30, 2.0, 10.0) - 0.1).abs() < 1e-15);
        for t in 1..50 {
            let g = gamma_map(t, t, 2.0, 2.0);
            assert!((g - (t as f64 + 1.0) / (t as f64 + 2.0)).abs() < 1e-15);
        }
        assert!(gamma_map(0, 1, 1.0, 1.0) >= 1e-6);
    }

    #[test]
    fn equal_codelengths_give_uniform_posterior() {
        let p = model_posterior(&[50.0; 4], None, 0.1, 0.03, 1).unwrap();
        for &v in &p.probs {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn three_model_hand_evaluation() {
        let l = [100.0, 90.0, 95.0];
        let beta = 0.0316;
        let p = model_posterior(&l, Some(2), 0.1, beta, 1).unwrap();
        // Oracle: direct exponentiation of β(ln prior − L) with max shift.
        let prior = [0.05f64, 0.9, 0.05];
        let s: Vec<f64> = l.iter().zip(&prior).map(|(l, q)| beta * (q.ln() - l)).collect();
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for (got, want) in p.probs.iter().zip(e.iter().map(|v| v / z)) {
            assert!((got - want).abs() < 1e-14);
        }
        // Frozen values from the oracle above.
        assert!((p.probs[0] - 0.2721848).abs() < 1e-6, "{:?}", p.probs);
        assert!((p.probs[1] - 0.4090416).abs() < 1e-6);
        assert!((p.probs[2] - 0.3187736).abs() < 1e-6);
    }

    #[test]
    fn zero_prior_mass_and_invalid_inputs() {
        let p = model_posterior(&[10.0, 10.0, 10.0, 1.0], Some(1), 0.2, 1.0, 1).unwrap();
        assert_eq!(p.probs[2], 0.0);
        assert_eq!(p.probs[3], 0.0);
        assert!(matches!(
            model_posterior(&[f64::INFINITY; 3], None, 0.1, 0.5, 1),
            Err(Error::NoValidModel)
        ));
        assert!(model_posterior(&[1.0, 2.0], None, 0.1, 0.0, 1).is_err());
    }

    #[test]
    fn ddim_and_entropy_examples() {
        let pm = ModelPosterior::point_mass(3, 5, 1);
        assert_eq!(ddim(&pm), 3.0);
        assert_eq!(structural_entropy(&pm), 0.0);
        let half = ModelPosterior::new(vec![0.0, 0.5, 0.5], 1).unwrap();
        assert!((ddim(&half) - 2.5).abs() < 1e-15);
        let p = ModelPosterior::new(vec![0.2, 0.3, 0.5], 1).unwrap();
        assert!((ddim(&p) - 2.3).abs() < 1e-15);
        let u = ModelPosterior::new(vec![0.25; 4], 1).unwrap();
        assert!((structural_entropy(&u) - 4f64.ln()).abs() < 1e-15);
        let d = ModelPosterior::new(vec![0.5, 0.25, 0.25], 1).unwrap();
        assert!((structural_entropy(&d) - 1.5 * 2f64.ln()).abs() < 1e-15);
        // k f(m) - 1 with f(3) = 12
        assert!((ddim_unnormalized(&pm, 3) - 35.0).abs() < 1e-12);
    }

    #[test]
    fn selector_state_counts_changes() {
        let mut s = SelectorState::new(5);
        assert!((s.gamma() - 1.0 / 11.0).abs() < 1e-15);
        s.advance(2);
        s.advance(2);
        s.advance(3);
        assert_eq!(s.changes, 1);
        assert_eq!(s.t, 3);
        assert!((s.gamma() - 2.0 / 14.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn prior_rows_sum_to_one(max_k in 2usize..12, prev_off in 0usize..12, gamma in 0.001f64..0.999) {
            let prev = 1 + prev_off % max_k;
            let total: f64 = (1..=max_k).map(|k| transition_prior(k, prev, gamma, max_k).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn posterior_is_normalized_and_ddim_bounded(
            ls in proptest::collection::vec(0.0f64..5000.0, 1..8),
            prev_off in 0usize..8,
            gamma in 0.001f64..0.999,
            beta in 0.001f64..2.0,
        ) {
            let max_k = ls.len();
            let prev = 1 + prev_off % max_k;
            let p = model_posterior(&ls, Some(prev), gamma, beta, 1).unwrap();
            let total: f64 = p.probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let d = ddim(&p);
            prop_assert!(d >= 1.0 - 1e-12 && d <= max_k as f64 + 1e-12);
            let h = structural_entropy(&p);
            prop_assert!(h >= -1e-12 && h <= (max_k as f64).ln() + 1e-12);
            if h == 0.0 {
                prop_assert!((d - d.round()).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_is_beta_invariant(
            ls in proptest::collection::vec(0.0f64..500.0, 2..6),
            b1 in 0.01f64..1.0,
            b2 in 0.01f64..1.0,
        ) {
            let p1 = model_posterior(&ls, None, 0.2, b1, 1).unwrap();
            let p2 = model_posterior(&ls, None, 0.2, b2, 1).unwrap();
            prop_assert_eq!(p1.argmax(), p2.argmax());
        }
    }
}
