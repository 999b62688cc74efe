// SPDX-License-Identifier: MIT OR Apache-2.0

//! Autoregressive models and their sequential NML codelength.
//!
//! The model is `x_t = a_1 x_{t-1} + ... + a_k x_{t-k} + ε`, `ε ~ N(0, σ²)`,
//! without intercept. The sequential codelength of a window charges every
//! point `x_j` with `-ln p(x_j; θ̂(x_j, x^{j-1})) + ln Z_j`, where `θ̂(y, ·)` is
//! the least-squares fit including the candidate `y` and
//! `Z_j = ∫ p(y; θ̂(y, x^{j-1})) dy` over a bounded range.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Lower bound applied to every variance estimate.
pub const MIN_VARIANCE: f64 = 1e-12;
/// Diagonal added to a singular normal-equation matrix.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `coefficients[i] = a_{i+1}`.
    pub coefficients: Vec<f64>,
    pub noise_variance: f64,
    /// Set when the design was singular and the ridge fallback was used.
    #[serde(default)]
    pub ridge: bool,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }
}

/// `φ_t = (x_{t-1}, ..., x_{t-k})`.
fn lags(series: &[f64], t: usize, k: usize) -> impl Iterator<Item = f64> + '_ {
    (1..=k).map(move |i| series[t - i])
}

/// Normal equations `XᵀX` and `Xᵀy` for rows `t = k..series.len()`.
fn normal_equations(series: &[f64], k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    let mut phi = vec![0.0; k];
    for t in k..series.len() {
        for (slot, v) in phi.iter_mut().zip(lags(series, t, k)) {
            *slot = v;
        }
        for i in 0..k {
            xty[i] += phi[i] * series[t];
            for j in 0..k {
                xtx[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    (xtx, xty)
}

/// Inverse of a normal-equation matrix, with the ridge fallback.
fn invert_gram(xtx: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = xtx.nrows();
    if let Some(ch) = xtx.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return (inv, false);
        }
    }
    let ridged = xtx + DMatrix::<f64>::identity(k, k) * RIDGE;
    let inv = ridged
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::<f64>::identity(k, k) / RIDGE);
    (inv, true)
}

fn residual_sum_of_squares(series: &[f64], coef: &[f64]) -> f64 {
    let k = coef.len();
    (k..series.len())
        .map(|t| {
            let pred: f64 = lags(series, t, k).zip(coef).map(|(x, a)| x * a).sum();
            let e = series[t] - pred;
            e * e
        })
        .sum()
}

/// Least-squares AR(k) fit on `history`; `σ²` is the mean squared residual.
pub fn ar_mle(history: &[f64], k: usize) -> Result<ArModel> {
    if k == 0 {
        return Err(Error::config("AR order must be >= 1"));
    }
    if history.len() < k + 2 {
        return Err(Error::InsufficientData {
            needed: k + 2,
            got: history.len(),
        });
    }
    if history.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("ar_mle", "non-finite value in history"));
    }
    let (xtx, xty) = normal_equations(history, k);
    let (inv, ridge) = invert_gram(xtx);
    let coef = inv * xty;
    let coefficients: Vec<f64> = coef.iter().copied().collect();
    let rows = (history.len() - k) as f64;
    let noise_variance = (residual_sum_of_squares(history, &coefficients) / rows).max(MIN_VARIANCE);
    Ok(ArModel {
        coefficients,
        noise_variance,
        ridge,
    })
}

/// Whether `x_t = Σ a_i x_{t-i} + ε` is stationary, i.e. every root of the
/// companion matrix lies strictly inside the unit circle. Checked with the
/// step-down (reflection coefficient) recursion.
pub fn is_stable(coefficients: &[f64]) -> bool {
    let mut a = coefficients.to_vec();
    while let Some(&kappa) = a.last() {
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let p = a.len();
        let denom = 1.0 - kappa * kappa;
        let next: Vec<f64> = (0..p - 1).map(|i| (a[i] + kappa * a[p - 2 - i]) / denom).collect();
        a = next;
    }
    true
}

/// A window of consecutive observations ending at step `t`, with the
/// observations preceding it used for the initial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArWindow {
    pub history: Vec<f64>,
    pub values: Vec<f64>,
    pub t: usize,
}

impl ArWindow {
    /// History length needed before a window can be scored at order `k`.
    pub fn min_history(k: usize) -> usize {
        2 * k + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArNmlOptions {
    /// Half-width of the normalizer range in running standard deviations.
    pub range_sds: f64,
    /// Relative tolerance of the quadrature.
    pub rel_tol: f64,
}

impl Default for ArNmlOptions {
    fn default() -> Self {
        Self {
            range_sds: 10.0,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialNml {
    /// Sum of the point terms, in nats.
    pub total: f64,
    pub point_terms: Vec<f64>,
    /// `ln Z_j` for each point.
    pub log_normalizers: Vec<f64>,
    /// Whether the initial fit needed the ridge fallback.
    pub ridge: bool,
}

/// Recursive least-squares state: coefficients, `(XᵀX)⁻¹`, residual sum of
/// squares and row count.
struct Rls {
    a: Vec<f64>,
    p: Vec<f64>,
    rss: f64,
    rows: f64,
}

impl Rls {
    fn fit(series: &[f64], k: usize) -> (Self, bool) {
        let (xtx, xty) = normal_equations(series, k);
        let (inv, ridge) = invert_gram(xtx);
        let a: Vec<f64> = (&inv * xty).iter().copied().collect();
        let rss = residual_sum_of_squares(series, &a);
        let mut p = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                p[i * k + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        let rows = (series.len() - k) as f64;
        (Self { a, p, rss, rows }, ridge)
    }
}

/// Plug-in density of the candidate point, as a function of its innovation
/// `u = y - φᵀa` before the rank-one update.
#[derive(Debug, Clone, Copy)]
struct CandidateDensity {
    d: f64,
    rss: f64,
    rows_after: f64,
}

impl CandidateDensity {
    fn log_pdf(&self, u: f64) -> f64 {
        let residual = u / self.d;
        let var = ((self.rss + u * u / self.d) / self.rows_after).max(MIN_VARIANCE);
        -0.5 * ((2.0 * PI * var).ln() + residual * residual / var)
    }
}

/// Running mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n > 0.0 {
            (self.m2 / self.n).sqrt()
        } else {
            0.0
        }
    }
}

fn log_normalizer(density: CandidateDensity, lo: f64, hi: f64, opts: &QuadOptions) -> Result<f64> {
    let f = |u: f64| density.log_pdf(u).exp();
    let z = integrate(f, lo, hi, &[0.0], opts)?;
    if z.value > 0.0 {
        Ok(z.value.ln())
    } else {
        Err(Error::Numeric(format!("AR normalizer vanished on [{lo}, {hi}]")))
    }
}

/// Sequential NML codelength of `window.values` under AR(`k`).
///
/// The normalizer range is `x̄ ± range_sds·s`, with `x̄` and `s` the running
/// mean and population standard deviation of everything before the point.
/// A quadrature failure is retried once on a doubled range.
pub fn sequential_nml_ar(window: &ArWindow, k: usize, opts: &ArNmlOptions) -> Result<SequentialNml> {
    if k == 0 {
        return Err(Error::config("AR order must be >= 1"));
    }
    let needed = ArWindow::min_history(k);
    if window.history.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: window.history.len(),
        });
    }
    if window.history.iter().chain(&window.values).any(|x| !x.is_finite()) {
        return Err(Error::domain("sequential_nml_ar", "non-finite value in window"));
    }
    let mut series: Vec<f64> = Vec::with_capacity(window.history.len() + window.values.len());
    series.extend_from_slice(&window.history);
    let (mut rls, ridge) = Rls::fit(&series, k);
    let mut running = Welford::default();
    window.history.iter().for_each(|&x| running.push(x));

    let quad = QuadOptions {
        rel_tol: opts.rel_tol,
        ..QuadOptions::default()
    };
    let mut phi = vec![0.0; k];
    let mut p_phi = vec![0.0; k];
    let mut point_terms = Vec::with_capacity(window.values.len());
    let mut log_normalizers = Vec::with_capacity(window.values.len());
    for &x in &window.values {
        let t = series.len();
        for (slot, v) in phi.iter_mut().zip(lags(&series, t, k)) {
            *slot = v;
        }
        for i in 0..k {
            p_phi[i] = (0..k).map(|j| rls.p[i * k + j] * phi[j]).sum();
        }
        let d = 1.0 + phi.iter().zip(&p_phi).map(|(a, b)| a * b).sum::<f64>();
        let pred: f64 = phi.iter().zip(&rls.a).map(|(a, b)| a * b).sum();
        let density = CandidateDensity {
            d,
            rss: rls.rss,
            rows_after: rls.rows + 1.0,
        };

        let s = match running.std() {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        let half = opts.range_sds * s;
        let (lo, hi) = (running.mean - half - pred, running.mean + half - pred);
        let log_z = match log_normalizer(density, lo, hi, &quad) {
            Ok(v) => v,
            Err(_) => log_normalizer(density, lo - half, hi + half, &quad)?,
        };

        let u = x - pred;
        let term = log_z - density.log_pdf(u);
        point_terms.push(term);
        log_normalizers.push(log_z);

        let gain: Vec<f64> = p_phi.iter().map(|v| v / d).collect();
        for i in 0..k {
            rls.a[i] += gain[i] * u;
            for j in 0..k {
                rls.p[i * k + j] -= gain[i] * p_phi[j];
            }
        }
        rls.rss += u * u / d;
        rls.rows += 1.0;
        series.push(x);
        running.push(x);
    }
    let total = point_terms.iter().sum();
    Ok(SequentialNml {
        total,
        point_terms,
        log_normalizers,
        ridge,
    })
}

/// Codelengths of one window for orders `1..=max_k`.
pub fn ar_codelengths(window: &ArWindow, max_k: usize, opts: &ArNmlOptions) -> Result<Vec<f64>> {
    (1..=max_k).map(|k| sequential_nml_ar(window, k, opts).map(|s| s.total)).collect()
}
