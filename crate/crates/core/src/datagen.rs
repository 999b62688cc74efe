// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic streams with annotated gradual model changes.
//!
//! Each step `t` draws from its own ChaCha stream (`set_stream(t)`) so that a
//! step's data does not depend on how many variates earlier steps consumed.
//! Stream 0 is reserved for the per-component covariance factors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::ar::is_stable;
use crate::batch::DataBatch;
use crate::error::{Error, Result};

/// Number of mixture components the generators know about.
pub const MAX_COMPONENTS: usize = 4;

/// Interpolation weight `(t-τ₁)^α / ((τ₂-t)^α + (t-τ₁)^α)` of the new mean.
pub fn interpolation_weight(t: f64, tau1: f64, tau2: f64, alpha: f64) -> f64 {
    if t <= tau1 {
        return 0.0;
    }
    if t >= tau2 {
        return 1.0;
    }
    let a = (tau2 - t).powf(alpha);
    let b = (t - tau1).powf(alpha);
    b / (a + b)
}

/// `f_α(t)`: the mean moving from `from` to `to` over `(τ₁, τ₂)`.
pub fn interpolate_mean(t: f64, tau1: f64, tau2: f64, alpha: f64, from: &[f64], to: &[f64]) -> Vec<f64> {
    let w = interpolation_weight(t, tau1, tau2, alpha);
    from.iter().zip(to).map(|(a, b)| (1.0 - w) * a + w * b).collect()
}

/// Ground truth attached to a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    /// True model index per step; `true_k[t - 1]` for step `t`.
    pub true_k: Vec<usize>,
    /// Inclusive transition intervals `[τ + 1, τ']`.
    pub transitions: Vec<(usize, usize)>,
    /// First step generated under each new structure.
    pub sign_times: Vec<usize>,
}

impl Annotations {
    pub fn in_transition(&self, t: usize) -> bool {
        self.transitions.iter().any(|&(a, b)| a <= t && t <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSchedule {
    pub tau1: usize,
    pub tau2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmStreamConfig {
    /// Observations per step.
    pub n: usize,
    /// Dimension.
    pub m: usize,
    /// Component means; when absent, `μ_i = (i-1)·8√var·e₁`.
    #[serde(default)]
    pub means: Option<Vec<Vec<f64>>>,
    pub alpha: f64,
    /// Component 3 emerges from component 2 over this interval.
    pub first: ChangeSchedule,
    /// Component 4 emerges from component 3 over this interval.
    #[serde(default)]
    pub second: Option<ChangeSchedule>,
    /// Number of steps.
    #[serde(rename = "T")]
    pub steps: usize,
    pub r: f64,
    pub var: f64,
    pub seed: u64,
}

impl GmmStreamConfig {
    /// Single gradual change from two to three components.
    pub fn dataset1(alpha: f64, seed: u64) -> Self {
        Self {
            n: 1000,
            m: 3,
            means: None,
            alpha,
            first: ChangeSchedule { tau1: 9, tau2: 29 },
            second: None,
            steps: 39,
            r: 0.2,
            var: 3.0,
            seed,
        }
    }

    /// Two gradual changes, 2 → 3 → 4 components, with the second transition
    /// ending at step 59.
    pub fn dataset2(alpha: f64, seed: u64) -> Self {
        Self {
            second: Some(ChangeSchedule { tau1: 49, tau2: 59 }),
            steps: 79,
            ..Self::dataset1(alpha, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::config(msg));
        if self.n == 0 || self.m == 0 {
            return fail(format!("n = {} and m = {} must be positive", self.n, self.m));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha = {} must lie in (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return fail(format!("r = {} must lie in [0, 1]", self.r));
        }
        if !(self.var > 0.0 && self.var.is_finite()) {
            return fail(format!("var = {} must be positive", self.var));
        }
        let ChangeSchedule { tau1, tau2 } = self.first;
        if !(tau1 < tau2 && tau2 <= self.steps) {
            return fail(format!("need tau1 < tau2 <= T, got ({tau1}, {tau2}, {})", self.steps));
        }
        if let Some(s) = self.second {
            if !(s.tau1 < s.tau2 && s.tau2 <= self.steps) {
                return fail(format!("need tau3 < tau4 <= T, got ({}, {}, {})", s.tau1, s.tau2, self.steps));
            }
            if s.tau1 < tau2 {
                return fail(format!("transitions overlap: tau3 = {} < tau2 = {tau2}", s.tau1));
            }
        }
        if let Some(means) = &self.means {
            if means.len() < self.components_max() || means.iter().any(|mu| mu.len() != self.m) {
                return fail(format!(
                    "need {} means of dimension {}",
                    self.components_max(),
                    self.m
                ));
            }
        }
        Ok(())
    }

    fn components_max(&self) -> usize {
        if self.second.is_some() {
            4
        } else {
            3
        }
    }

    pub fn resolved_means(&self) -> Vec<Vec<f64>> {
        self.means.clone().unwrap_or_else(|| default_means(self.m, self.var))
    }

    /// Means active at step `t`.
    pub fn means_at(&self, t: usize) -> Vec<Vec<f64>> {
        let mu = self.resolved_means();
        let tf = t as f64;
        let mut active = vec![mu[0].clone(), mu[1].clone()];
        let ChangeSchedule { tau1, tau2 } = self.first;
        if t > tau1 {
            active.push(interpolate_mean(tf, tau1 as f64, tau2 as f64, self.alpha, &mu[1], &mu[2]));
        }
        if let Some(s) = self.second {
            if t > s.tau1 {
                active.push(interpolate_mean(tf, s.tau1 as f64, s.tau2 as f64, self.alpha, &mu[2], &mu[3]));
            }
        }
        active
    }

    pub fn annotations(&self) -> Annotations {
        let mut transitions = vec![(self.first.tau1 + 1, self.first.tau2)];
        let mut sign_times = vec![self.first.tau1 + 1];
        if let Some(s) = self.second {
            transitions.push((s.tau1 + 1, s.tau2));
            sign_times.push(s.tau1 + 1);
        }
        let true_k = (1..=self.steps).map(|t| self.means_at(t).len()).collect();
        Annotations {
            true_k,
            transitions,
            sign_times,
        }
    }
}

/// `μ_i = (i-1)·8√var·e₁`.
pub fn default_means(m: usize, var: f64) -> Vec<Vec<f64>> {
    let spacing = 8.0 * var.sqrt();
    (0..MAX_COMPONENTS)
        .map(|i| {
            let mut mu = vec![0.0; m];
            mu[0] = i as f64 * spacing;
            mu
        })
        .collect()
}

/// `Σ = (r A Aᵀ + (1-r) I)·var` with standard-normal `A`, one per component,
/// drawn from stream 0 of `seed`. Returned row-major.
pub fn component_covariances(m: usize, r: f64, var: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..MAX_COMPONENTS)
        .map(|_| {
            let a = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
            let sigma = (&a * a.transpose() * r + DMatrix::<f64>::identity(m, m) * (1.0 - r)) * var;
            let mut out = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    out[i * m + j] = sigma[(i, j)];
                }
            }
            out
        })
        .collect()
}

fn step_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Draws the whole stream; batch `t` has `n` rows with uniformly random
/// component labels.
pub fn gen_gmm_stream(config: &GmmStreamConfig) -> Result<(Vec<DataBatch>, Annotations)> {
    config.validate()?;
    let m = config.m;
    let factors: Vec<DMatrix<f64>> = component_covariances(m, config.r, config.var, config.seed)
        .into_iter()
        .map(|c| {
            DMatrix::from_row_slice(m, m, &c)
                .cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::Numeric("component covariance is not positive definite".into()))
        })
        .collect::<Result<_>>()?;
    let mut batches = Vec::with_capacity(config.steps);
    for t in 1..=config.steps {
        let means = config.means_at(t);
        let k = means.len();
        let mut rng = step_rng(config.seed, t);
        let mut values = Vec::with_capacity(config.n * m);
        let mut z = vec![0.0; m];
        for _ in 0..config.n {
            let c = rng.random_range(0..k);
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let l = &factors[c];
            for i in 0..m {
                let offset: f64 = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                values.push(means[c][i] + offset);
            }
        }
        batches.push(DataBatch::new(t, m, values)?);
    }
    Ok((batches, config.annotations()))
}

/// How the generating order is chosen inside the AR transition period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMixing {
    /// One order per step.
    #[default]
    PerStep,
    /// One order per observation.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArStreamConfig {
    pub n: usize,
    /// Coefficients of the model before the change.
    pub before: Vec<f64>,
    /// Coefficients of the model after the change.
    pub after: Vec<f64>,
    pub first: ChangeSchedule,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(default = "unit")]
    pub noise_sd: f64,
    #[serde(default)]
    pub mixing: OrderMixing,
    /// Samples discarded before step 1.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    500
}

impl ArStreamConfig {
    /// AR(1) changing gradually to AR(3).
    pub fn dataset3(seed: u64) -> Self {
        Self {
            n: 1000,
            before: vec![0.5],
            after: vec![0.5, 0.3, -0.4],
            first: ChangeSchedule { tau1: 9, tau2: 29 },
            steps: 39,
            noise_sd: 1.0,
            mixing: OrderMixing::PerStep,
            burn_in: default_burn_in(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be positive"));
        }
        let ChangeSchedule { tau1, tau2 } = self.first;
        if !(tau1 < tau2 && tau2 <= self.steps) {
            return Err(Error::config(format!(
                "need tau1 < tau2 <= T, got ({tau1}, {tau2}, {})",
                self.steps
            )));
        }
        for (name, c) in [("before", &self.before), ("after", &self.after)] {
            if c.is_empty() || !is_stable(c) {
                return Err(Error::config(format!("'{name}' coefficients {c:?} are not a stable AR model")));
            }
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd must be positive"));
        }
        Ok(())
    }

    /// Probability that step `t` (or a sample in it) uses the new model.
    pub fn after_probability(&self, t: usize) -> f64 {
        let ChangeSchedule { tau1, tau2 } = self.first;
        interpolation_weight(t as f64, tau1 as f64, tau2 as f64, 1.0)
    }

    pub fn annotations_with(&self, true_k: Vec<usize>) -> Annotations {
        Annotations {
            true_k,
            transitions: vec![(self.first.tau1 + 1, self.first.tau2)],
            sign_times: vec![self.first.tau1 + 1],
        }
    }
}

/// One continuous AR series cut into steps of `n` values. In the transition
/// period the new model is used with probability `(t-τ₁)/(τ₂-τ₁)`. The
/// annotated order is the one drawn for the step (per-step mixing) or the
/// more probable one (per-sample mixing).
pub fn gen_ar_stream(config: &ArStreamConfig) -> Result<(Vec<DataBatch>, Annotations)> {
    config.validate()?;
    let p = config.before.len().max(config.after.len());
    let mut series: Vec<f64> = vec![0.0; p];
    let step = |rng: &mut ChaCha8Rng, coef: &[f64], series: &mut Vec<f64>| {
        let t = series.len();
        let mean: f64 = coef.iter().enumerate().map(|(i, a)| a * series[t - 1 - i]).sum();
        let e: f64 = StandardNormal.sample(rng);
        series.push(mean + config.noise_sd * e);
    };
    let mut burn = step_rng(config.seed, 0);
    for _ in 0..config.burn_in {
        step(&mut burn, &config.before, &mut series);
    }
    let mut batches = Vec::with_capacity(config.steps);
    let mut true_k = Vec::with_capacity(config.steps);
    for t in 1..=config.steps {
        let mut rng = step_rng(config.seed, t);
        let q = config.after_probability(t);
        let start = series.len();
        match config.mixing {
            OrderMixing::PerStep => {
                let use_after = q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q);
                let coef = if use_after { &config.after } else { &config.before };
                true_k.push(coef.len());
                for _ in 0..config.n {
                    step(&mut rng, coef, &mut series);
                }
            }
            OrderMixing::PerSample => {
                true_k.push(if q >= 0.5 { config.after.len() } else { config.before.len() });
                for _ in 0..config.n {
                    let use_after = q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q);
                    let coef = if use_after { &config.after } else { &config.before };
                    step(&mut rng, coef, &mut series);
                }
            }
        }
        batches.push(DataBatch::new(t, 1, series[start..].to_vec())?);
    }
    Ok((batches, config.annotations_with(true_k)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let (a, b) = (vec![1.0, 2.0], vec![5.0, -2.0]);
        for alpha in [0.2, 0.5, 1.0] {
            let mid = interpolate_mean(19.0, 9.0, 29.0, alpha, &a, &b);
            assert!((mid[0] - 3.0).abs() < 1e-15 && mid[1].abs() < 1e-15);
            // Endpoint limits: the distance to the limit is at most
            // (δ / (τ₂ - τ₁ - δ))^α.
            for delta in [1e-2f64, 1e-4, 1e-8] {
                let bound = (delta / (20.0 - delta)).powf(alpha);
                let near_start = interpolate_mean(9.0 + delta, 9.0, 29.0, alpha, &a, &b);
                let near_end = interpolate_mean(29.0 - delta, 9.0, 29.0, alpha, &a, &b);
                assert!((near_start[0] - 1.0).abs() <= 4.0 * bound + 1e-12);
                assert!((near_end[0] - 5.0).abs() <= 4.0 * bound + 1e-12);
            }
        }
        assert_eq!(interpolation_weight(9.0, 9.0, 29.0, 0.5), 0.0);
        assert_eq!(interpolation_weight(29.0, 9.0, 29.0, 0.5), 1.0);
    }

    #[test]
    fn interpolation_weight_monotone() {
        for alpha in [0.1, 0.2, 0.5, 0.8, 1.0] {
            let mut prev = 0.0;
            for i in 1..200 {
                let t = 9.0 + 20.0 * i as f64 / 200.0;
                let w = interpolation_weight(t, 9.0, 29.0, alpha);
                assert!(w >= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn isotropic_covariance_without_mixing() {
        for cov in component_covariances(3, 0.0, 3.0, 11) {
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 3.0 } else { 0.0 };
                    assert!((cov[i * 3 + j] - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn dataset_annotations() {
        let d1 = GmmStreamConfig::dataset1(0.5, 1).annotations();
        assert_eq!(d1.sign_times, vec![10]);
        assert_eq!(d1.transitions, vec![(10, 29)]);
        assert_eq!(d1.true_k.len(), 39);
        let d2 = GmmStreamConfig::dataset2(0.5, 1).annotations();
        for t in 1..=79 {
            let expect = if t <= 9 { 2 } else if t <= 49 { 3 } else { 4 };
            assert_eq!(d2.true_k[t - 1], expect, "t={t}");
        }
        assert_eq!(d2.sign_times, vec![10, 50]);
        assert!(d2.in_transition(55) && !d2.in_transition(60));
    }

    #[test]
    fn second_transition_midpoint() {
        let mut c = GmmStreamConfig::dataset2(1.0, 4);
        c.second = Some(ChangeSchedule { tau1: 49, tau2: 69 });
        let mu = c.resolved_means();
        let at = c.means_at(59);
        for i in 0..3 {
            assert!((at[3][i] - 0.5 * (mu[2][i] + mu[3][i])).abs() < 1e-12);
        }
    }

    #[test]
    fn small_stream_moments() {
        let mut c = GmmStreamConfig::dataset1(0.5, 8);
        c.n = 4000;
        c.steps = 2;
        c.first = ChangeSchedule { tau1: 1, tau2: 2 };
        let (batches, _) = gen_gmm_stream(&c).unwrap();
        // Step 1: equal mixture of μ₁ and μ₂ on the first axis.
        let (mean, _) = batches[0].moments();
        let spacing = 8.0 * 3f64.sqrt();
        assert!((mean[0] - spacing / 2.0).abs() < 0.5, "{mean:?}");
        assert!(mean[1].abs() < 0.2 && mean[2].abs() < 0.2);
    }

    #[test]
    fn prefix_determinism() {
        let d1 = gen_gmm_stream(&GmmStreamConfig::dataset1(0.5, 77)).unwrap().0;
        let again = gen_gmm_stream(&GmmStreamConfig::dataset1(0.5, 77)).unwrap().0;
        assert_eq!(d1, again);
        let mut d2 = GmmStreamConfig::dataset2(0.5, 77);
        d2.second = None;
        d2.steps = 39;
        assert_eq!(gen_gmm_stream(&d2).unwrap().0, d1);
        let mut longer = GmmStreamConfig::dataset2(0.5, 77);
        longer.second = Some(ChangeSchedule { tau1: 49, tau2: 59 });
        let l = gen_gmm_stream(&longer).unwrap().0;
        assert_eq!(&l[..39], &d1[..]);
    }

    #[test]
    fn config_errors() {
        let mut c = GmmStreamConfig::dataset1(0.5, 1);
        c.alpha = 1.5;
        assert!(gen_gmm_stream(&c).is_err());
        let mut c = GmmStreamConfig::dataset2(0.5, 1);
        c.second = Some(ChangeSchedule { tau1: 20, tau2: 40 });
        assert!(c.validate().is_err());
        let mut c = GmmStreamConfig::dataset1(0.5, 1);
        c.first = ChangeSchedule { tau1: 29, tau2: 9 };
        assert!(c.validate().is_err());
        let mut a = ArStreamConfig::dataset3(1);
        a.after = vec![0.2, 0.2, 0.7];
        assert!(gen_ar_stream(&a).is_err());
    }

    #[test]
    fn ar_schedule_and_determinism() {
        let c = ArStreamConfig::dataset3(5);
        assert_eq!(c.after_probability(9), 0.0);
        assert_eq!(c.after_probability(19), 0.5);
        assert_eq!(c.after_probability(30), 1.0);
        let (a, ann) = gen_ar_stream(&c).unwrap();
        let (b, _) = gen_ar_stream(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 39);
        assert!(ann.true_k[..9].iter().all(|&k| k == 1));
        assert!(ann.true_k[29..].iter().all(|&k| k == 3));
        assert_eq!(ann.sign_times, vec![10]);
        let mut ps = c.clone();
        ps.mixing = OrderMixing::PerSample;
        let (p, ann) = gen_ar_stream(&ps).unwrap();
        assert_eq!(p[..9], a[..9]);
        assert_eq!(ann.true_k[18], 3);
        assert_eq!(ann.true_k[17], 1);
    }

    #[test]
    fn ar_stream_recovers_coefficients() {
        let mut c = ArStreamConfig::dataset3(13);
        c.steps = 40;
        c.first = ChangeSchedule { tau1: 1, tau2: 2 };
        let (batches, _) = gen_ar_stream(&c).unwrap();
        let tail: Vec<f64> = batches[5..].iter().flat_map(|b| b.values().iter().copied()).collect();
        let fit = crate::ar::ar_mle(&tail, 3).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&c.after) {
            assert!((a - b).abs() < 0.03, "{:?}", fit.coefficients);
        }
        assert!((fit.noise_variance - 1.0).abs() < 0.05);
    }
}
