// SPDX-License-Identifier: MIT OR Apache-2.0

//! Log-domain special functions and reductions.

use alloc::format;
use core::f64::consts::PI;

use num_traits::Float;
use crate::error::{Error, Result};

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("log_gamma", format!("x = {x} must be positive and finite")));
    }
    // Γ is positive on (0, ∞) so the sign output is always +1.
    Ok(libm::lgamma_r(x).0)
}

/// `ln n!` computed as `ln Γ(n + 1)`.
pub fn log_factorial(n: usize) -> f64 {
    libm::lgamma_r(n as f64 + 1.0).0
}

/// `ln Γ_m(x) = m(m-1)/4 · ln π + Σ_{j=1..m} ln Γ(x + (1-j)/2)`.
///
/// Requires `x > (m-1)/2`; otherwise some factor has a non-positive argument.
pub fn log_multivariate_gamma(m: usize, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("log_multivariate_gamma", "dimension must be >= 1"));
    }
    let boundary = (m as f64 - 1.0) / 2.0;
    if !(x > boundary) {
        return Err(Error::domain(
            "log_multivariate_gamma",
            format!("x = {x} must exceed (m-1)/2 = {boundary}"),
        ));
    }
    let mf = m as f64;
    let mut acc = mf * (mf - 1.0) / 4.0 * PI.ln();
    for j in 1..=m {
        acc += log_gamma(x + (1.0 - j as f64) / 2.0)?;
    }
    Ok(acc)
}

/// `ln(e^a + e^b)` without overflow; `-∞` is the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`; returns `-∞` for an empty slice or all-`-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
