// SPDX-License-Identifier: MIT OR Apache-2.0

//! Globally adaptive Gauss–Kronrod (7, 15) quadrature on finite intervals.

use alloc::vec::Vec;

use crate::error::{Error, Result};

// Kronrod abscissae (positive half, descending) and weights; the Gauss
// 7-point rule uses every other abscissa.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-300,
            max_intervals: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over `[a, b]`, bisecting the worst segment until the summed
/// error estimate meets `max(abs_tol, rel_tol·|I|)`.
///
/// `breaks` are interior points (for example a known peak) that always
/// start as segment boundaries.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    let mut edges: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    edges.push(a);
    edges.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut segments: Vec<Segment> = edges.windows(2).map(|w| gk15(&mut f, w[0], w[1])).collect();
    let mut evaluations = 15 * segments.len();
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(QuadResult { value, error, evaluations });
        }
        if segments.len() >= opts.max_intervals {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            // Interval exhausted at machine precision.
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        segments.push(gk15(&mut f, s.a, mid));
        segments.push(gk15(&mut f, mid, s.b));
        evaluations += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let opts = QuadOptions::default();
        let r = integrate(|x| x.powi(5) - 2.0 * x * x + 1.0, -1.0, 2.0, &[], &opts).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - 2.0 * (8.0 + 1.0) / 3.0 + 3.0;
        assert!((r.value - exact).abs() < 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn gaussian_mass() {
        let opts = QuadOptions::default();
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let r = integrate(pdf, -12.0, 12.0, &[0.0], &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        // Narrow peak away from the center, located by a break point.
        let narrow = |x: f64| (-0.5 * ((x - 3.0) / 0.05).powi(2)).exp() / (0.05 * (2.0 * PI).sqrt());
        let r = integrate(narrow, -10.0, 10.0, &[3.0], &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oscillatory_and_endpoint_singular() {
        let opts = QuadOptions { rel_tol: 1e-10, ..QuadOptions::default() };
        let r = integrate(|x| (20.0 * x).sin() * x, 0.0, PI, &[], &opts).unwrap();
        assert!((r.value - (-PI / 20.0)).abs() < 1e-9);
        let r = integrate(|x| x.sqrt(), 0.0, 1.0, &[], &opts).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn failures() {
        let opts = QuadOptions::default();
        assert!(integrate(|x| x, 1.0, 0.0, &[], &opts).is_err());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, &[], &opts).is_err());
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, &[], &opts).is_err());
        let tight = QuadOptions { max_intervals: 2, ..opts };
        assert!(integrate(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, &[0.3], &tight).is_err());
    }
}
