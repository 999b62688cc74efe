// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian mixture fitting and the complete-variable NML codelength.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::batch::DataBatch;
use crate::complexity::ComplexityCache;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted mixture. Covariances are stored row-major, `m × m` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let m = self.dim();
        if k == 0 || m == 0 {
            return Err(Error::config("mixture needs at least one component of dimension >= 1"));
        }
        if self.means.len() != k || self.covariances.len() != k {
            return Err(Error::config("mixture parameter vectors disagree on k"));
        }
        if self.means.iter().any(|mu| mu.len() != m) || self.covariances.iter().any(|c| c.len() != m * m) {
            return Err(Error::config("mixture parameter shapes disagree on m"));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mixture weights must be a probability vector (sum {total})")));
        }
        Ok(())
    }

    /// Log-likelihood of `batch` under the mixture.
    pub fn log_likelihood(&self, batch: &DataBatch) -> Result<f64> {
        let densities = self.densities()?;
        let mut scratch = vec![0.0; self.dim()];
        let mut row_terms = vec![0.0; self.k()];
        let mut total = 0.0;
        for x in batch.rows() {
            for (j, d) in densities.iter().enumerate() {
                row_terms[j] = self.weights[j].ln() + d.log_pdf(x, &mut scratch);
            }
            total += crate::special::log_sum_exp(&row_terms);
        }
        Ok(total)
    }

    fn densities(&self) -> Result<Vec<Gaussian>> {
        let m = self.dim();
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(mu, cov)| Gaussian::new(mu, cov, m))
            .collect()
    }
}

/// Multivariate normal with a cached Cholesky factor.
struct Gaussian {
    mean: Vec<f64>,
    /// Lower-triangular factor, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: &[f64], cov: &[f64], m: usize) -> Result<Self> {
        let mat = DMatrix::from_row_slice(m, m, cov);
        let chol = mat
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("covariance is not positive definite: {cov:?}")))?;
        let l = chol.l();
        let mut flat = vec![0.0; m * m];
        let mut log_det = 0.0;
        for i in 0..m {
            for j in 0..=i {
                flat[i * m + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        Ok(Self {
            mean: mean.to_vec(),
            chol: flat,
            log_norm: -0.5 * (m as f64 * LN_2PI + log_det),
        })
    }

    #[inline]
    fn log_pdf(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let m = self.mean.len();
        let mut quad = 0.0;
        for i in 0..m {
            let mut s = x[i] - self.mean[i];
            let row = &self.chol[i * m..i * m + i];
            for (lij, zj) in row.iter().zip(z.iter()) {
                s -= lij * zj;
            }
            let zi = s / self.chol[i * m + i];
            z[i] = zi;
            quad += zi * zi;
        }
        self.log_norm - 0.5 * quad
    }
}

/// Symmetrizes `cov` and raises every eigenvalue below `eps` to `eps`.
pub fn floor_covariance(cov: &mut [f64], m: usize, eps: f64) {
    for a in 0..m {
        for b in (a + 1)..m {
            let avg = 0.5 * (cov[a * m + b] + cov[b * m + a]);
            cov[a * m + b] = avg;
            cov[b * m + a] = avg;
        }
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, cov));
    if eig.eigenvalues.iter().all(|&l| l >= eps) {
        return;
    }
    let floored = eig.eigenvalues.map(|l| l.max(eps));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    for a in 0..m {
        for b in 0..m {
            cov[a * m + b] = 0.5 * (rebuilt[(a, b)] + rebuilt[(b, a)]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub restarts: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Covariance eigenvalue floor.
    pub eps: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            tol: 1e-6,
            max_iter: 300,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: f64,
    pub iterations: usize,
}

fn min_points(k: usize, m: usize) -> usize {
    k * (m + 2)
}

/// Fits a `k`-component mixture by EM with k-means++ seeding, keeping the
/// best of `opts.restarts` runs.
pub fn em_fit(batch: &DataBatch, k: usize, seed: u64, opts: &EmOptions) -> Result<GmmFit> {
    em_fit_warm(batch, k, seed, opts, None)
}

/// As [`em_fit`], with an extra run started from `warm` when given.
pub fn em_fit_warm(
    batch: &DataBatch,
    k: usize,
    seed: u64,
    opts: &EmOptions,
    warm: Option<&GmmModel>,
) -> Result<GmmFit> {
    let m = batch.dim();
    if k == 0 {
        return Err(Error::config("mixture size must be >= 1"));
    }
    let needed = min_points(k, m);
    if batch.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: batch.len(),
        });
    }
    let mut workspace = EmWorkspace::new(batch, k);
    let mut best: Option<GmmFit> = None;
    let consider = |fit: GmmFit, best: &mut Option<GmmFit>| {
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            *best = Some(fit);
        }
    };
    if let Some(w) = warm.filter(|w| w.k() == k && w.dim() == m) {
        if let Ok(fit) = workspace.run(batch, w.clone(), opts) {
            consider(fit, &mut best);
        }
    }
    let restarts = if k == 1 { 1 } else { opts.restarts.max(1) };
    let mut last_err = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let init = kmeans_pp_init(batch, k, &mut rng, opts.eps);
        match workspace.run(batch, init, opts) {
            Ok(fit) => consider(fit, &mut best),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Numeric(format!("EM failed for k={k}"))))
}

/// k-means++ seeding followed by a hard nearest-center assignment.
fn kmeans_pp_init(batch: &DataBatch, k: usize, rng: &mut ChaCha8Rng, eps: f64) -> GmmModel {
    let n = batch.len();
    let m = batch.dim();
    let mut centers: Vec<usize> = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = batch.rows().map(|x| sq_dist(x, batch.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, x) in batch.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, batch.row(next)));
        }
    }

    let (_, global_cov) = batch.moments();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; m]; k];
    let mut assign = vec![0usize; n];
    for (i, x) in batch.rows().enumerate() {
        let j = (0..k)
            .min_by(|&a, &b| sq_dist(x, batch.row(centers[a])).total_cmp(&sq_dist(x, batch.row(centers[b]))))
            .unwrap();
        assign[i] = j;
        counts[j] += 1;
        for (s, v) in sums[j].iter_mut().zip(x) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            if counts[j] == 0 {
                batch.row(centers[j]).to_vec()
            } else {
                sums[j].iter().map(|s| s / counts[j] as f64).collect()
            }
        })
        .collect();
    let mut covs = vec![vec![0.0; m * m]; k];
    for (i, x) in batch.rows().enumerate() {
        let j = assign[i];
        for a in 0..m {
            let da = x[a] - means[j][a];
            for b in 0..m {
                covs[j][a * m + b] += da * (x[b] - means[j][b]);
            }
        }
    }
    for j in 0..k {
        if counts[j] > m {
            covs[j].iter_mut().for_each(|v| *v /= counts[j] as f64);
        } else {
            covs[j].clone_from(&global_cov);
        }
        floor_covariance(&mut covs[j], m, eps);
    }
    let weights = counts.iter().map(|&c| (c.max(1)) as f64).collect::<Vec<_>>();
    let total: f64 = weights.iter().sum();
    GmmModel {
        weights: weights.iter().map(|w| w / total).collect(),
        means,
        covariances: covs,
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct EmWorkspace {
    resp: Vec<f64>,
    global_cov: Vec<f64>,
}

impl EmWorkspace {
    fn new(batch: &DataBatch, k: usize) -> Self {
        Self {
            resp: vec![0.0; batch.len() * k],
            global_cov: batch.moments().1,
        }
    }

    /// E-step: fills responsibilities and returns the log-likelihood.
    fn expectation(&mut self, batch: &DataBatch, model: &GmmModel) -> Result<f64> {
        let k = model.k();
        let densities = model.densities()?;
        let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
        let mut z = vec![0.0; batch.dim()];
        let mut ll = 0.0;
        for (i, x) in batch.rows().enumerate() {
            let row = &mut self.resp[i * k..(i + 1) * k];
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                row[j] = log_w[j] + densities[j].log_pdf(x, &mut z);
                max = max.max(row[j]);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            ll += max + sum.ln();
        }
        Ok(ll)
    }

    fn maximization(&self, batch: &DataBatch, k: usize, eps: f64) -> GmmModel {
        let n = batch.len();
        let m = batch.dim();
        let mut nk = vec![0.0; k];
        let mut means = vec![vec![0.0; m]; k];
        for (i, x) in batch.rows().enumerate() {
            let row = &self.resp[i * k..(i + 1) * k];
            for j in 0..k {
                nk[j] += row[j];
                for (mu, v) in means[j].iter_mut().zip(x) {
                    *mu += row[j] * v;
                }
            }
        }
        for j in 0..k {
            if nk[j] > 0.0 {
                means[j].iter_mut().for_each(|v| *v /= nk[j]);
            }
        }
        let mut covs = vec![vec![0.0; m * m]; k];
        let mut diff = vec![0.0; m];
        for (i, x) in batch.rows().enumerate() {
            let row = &self.resp[i * k..(i + 1) * k];
            for j in 0..k {
                let r = row[j];
                if r == 0.0 {
                    continue;
                }
                for a in 0..m {
                    diff[a] = x[a] - means[j][a];
                }
                let cov = &mut covs[j];
                for a in 0..m {
                    let ra = r * diff[a];
                    for b in a..m {
                        cov[a * m + b] += ra * diff[b];
                    }
                }
            }
        }
        let tiny = 1e-10 * n as f64;
        for j in 0..k {
            let cov = &mut covs[j];
            if nk[j] > tiny {
                for a in 0..m {
                    for b in a..m {
                        let v = cov[a * m + b] / nk[j];
                        cov[a * m + b] = v;
                        cov[b * m + a] = v;
                    }
                }
            } else {
                // A collapsed component restarts from the global spread.
                cov.clone_from(&self.global_cov);
            }
            floor_covariance(cov, m, eps);
        }
        let floor = 1e-12;
        let total: f64 = nk.iter().map(|&v| v.max(floor)).sum();
        GmmModel {
            weights: nk.iter().map(|&v| v.max(floor) / total).collect(),
            means,
            covariances: covs,
        }
    }

    fn run(&mut self, batch: &DataBatch, init: GmmModel, opts: &EmOptions) -> Result<GmmFit> {
        let k = init.k();
        let mut model = init;
        let mut ll = self.expectation(batch, &model)?;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            iterations += 1;
            let next = self.maximization(batch, k, opts.eps);
            let next_ll = self.expectation(batch, &next)?;
            let improvement = next_ll - ll;
            model = next;
            let done = improvement.abs() < opts.tol * ll.abs().max(1e-300);
            ll = next_ll;
            if done {
                break;
            }
        }
        Ok(GmmFit {
            model,
            log_likelihood: ll,
            iterations,
        })
    }
}

/// Per-point component posteriors, row-major `n × k`.
pub fn responsibilities(batch: &DataBatch, model: &GmmModel) -> Result<Vec<f64>> {
    let mut ws = EmWorkspace {
        resp: vec![0.0; batch.len() * model.k()],
        global_cov: Vec::new(),
    };
    ws.expectation(batch, model)?;
    Ok(ws.resp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Draw each label from its component posterior.
    Sample,
    /// Take the most probable component.
    Map,
}

/// Observations together with a latent component label per row
/// (labels are `0..k`).
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteBatch<'a> {
    pub batch: &'a DataBatch,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl CompleteBatch<'_> {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &z in &self.labels {
            c[z] += 1;
        }
        c
    }
}

pub fn assign_labels<'a>(batch: &'a DataBatch, model: &GmmModel, mode: LabelMode, seed: u64) -> Result<CompleteBatch<'a>> {
    let resp = responsibilities(batch, model)?;
    Ok(labels_from_resp(batch, &resp, model.k(), mode, seed))
}

fn labels_from_resp<'a>(batch: &'a DataBatch, resp: &[f64], k: usize, mode: LabelMode, seed: u64) -> CompleteBatch<'a> {
    let labels = match mode {
        LabelMode::Map => resp
            .chunks_exact(k)
            .map(|row| argmax(row))
            .collect(),
        LabelMode::Sample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            resp.chunks_exact(k)
                .map(|row| {
                    let mut u: f64 = rng.random();
                    for (j, &p) in row.iter().enumerate() {
                        if u < p {
                            return j;
                        }
                        u -= p;
                    }
                    // Rounding left u just above the mass: take the last
                    // component with positive probability.
                    row.iter().rposition(|&p| p > 0.0).unwrap_or(k - 1)
                })
                .collect()
        }
    };
    CompleteBatch { batch, labels, k }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    best
}

/// `-ln p(x, z; θ̂(x, z))` with per-cluster Gaussian MLEs (eigenvalues floored
/// at `eps`) and `π̂_i = n_i / n`. Empty clusters contribute nothing when
/// `allow_empty` is set.
fn complete_negative_log_likelihood(y: &CompleteBatch<'_>, eps: f64, allow_empty: bool) -> Result<f64> {
    let m = y.batch.dim();
    let n = y.batch.len() as f64;
    let counts = y.counts();
    let needed = m + 2;
    for (cluster, &count) in counts.iter().enumerate() {
        if count < needed && !(allow_empty && count == 0) {
            return Err(Error::DegenerateAssignment { cluster, count, needed });
        }
    }
    let mut means = vec![vec![0.0; m]; y.k];
    for (x, &z) in y.batch.rows().zip(&y.labels) {
        for (mu, v) in means[z].iter_mut().zip(x) {
            *mu += v;
        }
    }
    for (mu, &c) in means.iter_mut().zip(&counts) {
        if c > 0 {
            mu.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    let mut scatter = vec![vec![0.0; m * m]; y.k];
    for (x, &z) in y.batch.rows().zip(&y.labels) {
        let mu = &means[z];
        for a in 0..m {
            let da = x[a] - mu[a];
            for b in 0..m {
                scatter[z][a * m + b] += da * (x[b] - mu[b]);
            }
        }
    }
    let mut total = 0.0;
    for (cluster, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let ni = count as f64;
        let s = DMatrix::from_row_slice(m, m, &scatter[cluster]) / ni;
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        // Σ̂ = Q diag(max(λ, ε)) Qᵀ shares eigenvectors with S, so both the
        // determinant and tr(Σ̂⁻¹ S) come from the eigenvalues.
        let mut log_det = 0.0;
        let mut trace = 0.0;
        for &l in eig.eigenvalues.iter() {
            let floored = l.max(eps);
            log_det += floored.ln();
            trace += l.max(0.0) / floored;
        }
        total += -ni * (ni / n).ln() + 0.5 * ni * (m as f64 * LN_2PI + log_det + trace);
    }
    Ok(total)
}

fn check_cache(y: &CompleteBatch<'_>, cache: &ComplexityCache) -> Result<()> {
    let c = cache.config();
    if c.dim != y.batch.dim() {
        return Err(Error::config(format!(
            "complexity cache is for m={}, batch has m={}",
            c.dim,
            y.batch.dim()
        )));
    }
    Ok(())
}

/// NML codelength (nats) of a complete batch: `-ln p(y; θ̂(y), k) + ln C_n(k)`.
pub fn complete_nml_codelength(y: &CompleteBatch<'_>, cache: &ComplexityCache) -> Result<f64> {
    check_cache(y, cache)?;
    let log_c = cache.log_complexity(y.batch.len(), y.k)?;
    Ok(complete_negative_log_likelihood(y, cache.config().eps, false)? + log_c)
}

/// How a usable latent assignment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "draws")]
pub enum Resolution {
    /// First assignment was usable; for sampling, `draws` is how many
    /// samples were taken.
    Sampled(usize),
    Map,
    /// Starved clusters were merged into their most probable neighbours.
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledCodelength {
    pub codelength: f64,
    pub resolution: Resolution,
}

/// Retries per `(t, k)` before falling back to the MAP assignment.
pub const MAX_RESAMPLES: usize = 10;

/// Codelength of `batch` under a fitted `model`, handling degenerate latent
/// assignments: resample up to [`MAX_RESAMPLES`] times, then use the MAP
/// assignment, then merge starved clusters.
pub fn model_codelength(
    batch: &DataBatch,
    model: &GmmModel,
    cache: &ComplexityCache,
    mode: LabelMode,
    seed: u64,
) -> Result<LabelledCodelength> {
    let k = model.k();
    let m = batch.dim();
    if batch.len() < m + 2 {
        return Err(Error::InsufficientData {
            needed: m + 2,
            got: batch.len(),
        });
    }
    let resp = responsibilities(batch, model)?;
    if mode == LabelMode::Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for draw in 1..=MAX_RESAMPLES {
            let y = labels_from_resp(batch, &resp, k, LabelMode::Sample, rng.random());
            match complete_nml_codelength(&y, cache) {
                Ok(codelength) => {
                    return Ok(LabelledCodelength {
                        codelength,
                        resolution: Resolution::Sampled(draw),
                    })
                }
                Err(Error::DegenerateAssignment { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    let mut y = labels_from_resp(batch, &resp, k, LabelMode::Map, 0);
    match complete_nml_codelength(&y, cache) {
        Ok(codelength) => {
            let resolution = match mode {
                LabelMode::Map => Resolution::Sampled(0),
                LabelMode::Sample => Resolution::Map,
            };
            return Ok(LabelledCodelength { codelength, resolution });
        }
        Err(Error::DegenerateAssignment { .. }) => {}
        Err(e) => return Err(e),
    }
    merge_starved(&mut y, &resp, m + 2);
    check_cache(&y, cache)?;
    let log_c = cache.log_complexity(batch.len(), k)?;
    let nll = complete_negative_log_likelihood(&y, cache.config().eps, true)?;
    Ok(LabelledCodelength {
        codelength: nll + log_c,
        resolution: Resolution::Merged,
    })
}

/// Moves every point of a cluster with fewer than `needed` points to its
/// most probable surviving cluster, starting from the smallest cluster.
fn merge_starved(y: &mut CompleteBatch<'_>, resp: &[f64], needed: usize) {
    let k = y.k;
    let mut alive: Vec<bool> = vec![true; k];
    loop {
        let counts = y.counts();
        let starved = (0..k)
            .filter(|&j| alive[j] && counts[j] < needed)
            .min_by_key(|&j| counts[j]);
        let Some(j) = starved else { break };
        alive[j] = false;
        if !alive.iter().any(|&a| a) {
            break;
        }
        for (i, z) in y.labels.iter_mut().enumerate() {
            if !alive[*z] {
                let row = &resp[i * k..(i + 1) * k];
                let mut best = None;
                for c in 0..k {
                    if alive[c] && best.is_none_or(|b: usize| row[c] > row[b]) {
                        best = Some(c);
                    }
                }
                *z = best.expect("some cluster is alive");
            }
        }
    }
}

/// Negative log density of a row under a single Gaussian, for tests and diagnostics.
pub fn gaussian_log_pdf(x: &[f64], mean: &[f64], cov: &[f64]) -> Result<f64> {
    let g = Gaussian::new(mean, cov, mean.len())?;
    let mut z = vec![0.0; mean.len()];
    Ok(g.log_pdf(x, &mut z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::ComplexityConfig;
    use core::f64::consts::PI;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_batch(t: usize, centers: &[(f64, f64)], per: usize, sigma: f64, seed: u64) -> DataBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for &(cx, cy) in centers {
            for _ in 0..per {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![cx + sigma * a, cy + sigma * b]);
            }
        }
        DataBatch::from_rows(t, &rows).unwrap()
    }

    fn cache_for(dim: usize, n_max: usize, k_max: usize) -> ComplexityCache {
        ComplexityCache::build(ComplexityConfig {
            dim,
            radius: 100.0,
            eps: 1e-3,
            n_max,
            k_max,
        })
        .unwrap()
    }

    #[test]
    fn single_component_is_closed_form_mle() {
        let b = gaussian_batch(1, &[(1.0, -2.0)], 400, 1.5, 7);
        let fit = em_fit(&b, 1, 3, &EmOptions::default()).unwrap();
        let (mean, cov) = b.moments();
        assert_eq!(fit.model.weights, vec![1.0]);
        for (a, e) in fit.model.means[0].iter().zip(&mean) {
            assert!((a - e).abs() < 1e-10);
        }
        for (a, e) in fit.model.covariances[0].iter().zip(&cov) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_separated_clusters() {
        let sigma = 1.0;
        let b = gaussian_batch(1, &[(0.0, 0.0), (10.0, 0.0)], 300, sigma, 11);
        let fit = em_fit(&b, 2, 5, &EmOptions::default()).unwrap();
        // Oracle: per-cluster MLE using the true labels.
        let truth: Vec<Vec<f64>> = [0usize, 300]
            .iter()
            .map(|&start| {
                let mut mu = vec![0.0; 2];
                for i in start..start + 300 {
                    mu[0] += b.row(i)[0] / 300.0;
                    mu[1] += b.row(i)[1] / 300.0;
                }
                mu
            })
            .collect();
        for t in &truth {
            let closest = fit
                .model
                .means
                .iter()
                .map(|mu| sq_dist(mu, t).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.5, "no fitted mean within 0.5 of {t:?}");
            assert!((t[0] - 0.0).abs() < 0.5 || (t[0] - 10.0).abs() < 0.5);
        }
        let fit3 = em_fit(&b, 3, 5, &EmOptions::default()).unwrap();
        assert!(fit3.log_likelihood >= fit.log_likelihood - 1e-6);
    }

    #[test]
    fn insufficient_data_is_reported() {
        let b = gaussian_batch(1, &[(0.0, 0.0)], 7, 1.0, 1);
        assert!(matches!(
            em_fit(&b, 2, 0, &EmOptions::default()),
            Err(Error::InsufficientData { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn covariance_floor_holds() {
        // Points on a line: the sample covariance is singular.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let b = DataBatch::from_rows(1, &rows).unwrap();
        let opts = EmOptions { eps: 0.25, ..EmOptions::default() };
        let fit = em_fit(&b, 2, 9, &opts).unwrap();
        for cov in &fit.model.covariances {
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(2, 2, cov));
            assert!(eig.eigenvalues.iter().all(|&l| l >= 0.25 - 1e-12), "{:?}", eig.eigenvalues);
            assert!((cov[1] - cov[2]).abs() < 1e-15);
        }
        fit.model.validate().unwrap();
    }

    #[test]
    fn labels_for_one_component_and_dominant_posterior() {
        let b = gaussian_batch(1, &[(0.0, 0.0)], 20, 1.0, 2);
        let one = GmmModel {
            weights: vec![1.0],
            means: vec![vec![0.0, 0.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]],
        };
        let y = assign_labels(&b, &one, LabelMode::Sample, 4).unwrap();
        assert!(y.labels.iter().all(|&z| z == 0));

        let two = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.0, 0.0], vec![12.0, 0.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
        };
        let at_mean = DataBatch::from_rows(1, &[vec![12.0, 0.0]]).unwrap();
        assert_eq!(assign_labels(&at_mean, &two, LabelMode::Map, 0).unwrap().labels, vec![1]);
    }

    #[test]
    fn sampled_label_frequencies_match_posterior() {
        let model = GmmModel {
            weights: vec![0.3, 0.7],
            means: vec![vec![0.0], vec![1.0]],
            covariances: vec![vec![1.0], vec![0.5]],
        };
        let x = 0.3;
        // Oracle: posterior from direct density evaluation.
        let dens = |mu: f64, var: f64| (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        let a = 0.3 * dens(0.0, 1.0);
        let c = 0.7 * dens(1.0, 0.5);
        let p0 = a / (a + c);
        let draws = 100_000;
        let b = DataBatch::new(1, 1, vec![x; draws]).unwrap();
        let y = assign_labels(&b, &model, LabelMode::Sample, 17).unwrap();
        let freq = y.labels.iter().filter(|&&z| z == 0).count() as f64 / draws as f64;
        let se = (p0 * (1.0 - p0) / draws as f64).sqrt();
        assert!((freq - p0).abs() < 3.0 * se, "freq {freq} vs {p0} (se {se})");
        let again = assign_labels(&b, &model, LabelMode::Sample, 17).unwrap();
        assert_eq!(y.labels, again.labels);
    }

    #[test]
    fn k1_codelength_is_gaussian_nll_plus_complexity() {
        let b = gaussian_batch(1, &[(0.5, 0.5)], 60, 2.0, 21);
        let cache = cache_for(2, 100, 3);
        let y = CompleteBatch { batch: &b, labels: vec![0; 60], k: 1 };
        let (mean, cov) = b.moments();
        let nll: f64 = -b.rows().map(|x| gaussian_log_pdf(x, &mean, &cov).unwrap()).sum::<f64>();
        let expect = nll + cache.log_complexity(60, 1).unwrap();
        let got = complete_nml_codelength(&y, &cache).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect.abs(), "{got} vs {expect}");
    }

    #[test]
    fn small_two_cluster_hand_computation() {
        // n = 10, m = 1, labels fixed: five points per cluster.
        let xs = [0.1, -0.4, 0.9, 0.3, -0.2, 5.2, 4.7, 6.1, 5.5, 4.9];
        let b = DataBatch::new(1, 1, xs.to_vec()).unwrap();
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let cache = cache_for(1, 10, 2);
        let y = CompleteBatch { batch: &b, labels, k: 2 };
        let mut expect = cache.log_complexity(10, 2).unwrap();
        for chunk in xs.chunks(5) {
            let mu = chunk.iter().sum::<f64>() / 5.0;
            let var = chunk.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 5.0;
            // -5 ln(1/2) + (5/2)(ln 2π + ln σ̂² + 1)
            expect += 5.0 * 2f64.ln() + 2.5 * ((2.0 * PI).ln() + var.ln() + 1.0);
        }
        let got = complete_nml_codelength(&y, &cache).unwrap();
        assert!((got - expect).abs() < 1e-10 * expect.abs(), "{got} vs {expect}");
    }

    #[test]
    fn codelength_difference_is_likelihood_plus_complexity() {
        let b = gaussian_batch(1, &[(0.0, 0.0), (6.0, 6.0)], 40, 1.0, 3);
        let cache = cache_for(2, 80, 3);
        let y1 = CompleteBatch { batch: &b, labels: vec![0; 80], k: 1 };
        let labels2: Vec<usize> = (0..80).map(|i| i / 40).collect();
        let y2 = CompleteBatch { batch: &b, labels: labels2, k: 2 };
        let l1 = complete_nml_codelength(&y1, &cache).unwrap();
        let l2 = complete_nml_codelength(&y2, &cache).unwrap();
        let nll1 = complete_negative_log_likelihood(&y1, 1e-3, false).unwrap();
        let nll2 = complete_negative_log_likelihood(&y2, 1e-3, false).unwrap();
        let dc = cache.log_complexity(80, 2).unwrap() - cache.log_complexity(80, 1).unwrap();
        assert!(((l2 - l1) - ((nll2 - nll1) + dc)).abs() < 1e-9);
    }

    #[test]
    fn permuting_labels_leaves_codelength_unchanged() {
        let b = gaussian_batch(1, &[(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)], 30, 1.0, 8);
        let cache = cache_for(2, 90, 3);
        let labels: Vec<usize> = (0..90).map(|i| i / 30).collect();
        let perm = [2usize, 0, 1];
        let permuted: Vec<usize> = labels.iter().map(|&z| perm[z]).collect();
        let a = complete_nml_codelength(&CompleteBatch { batch: &b, labels, k: 3 }, &cache).unwrap();
        let c = complete_nml_codelength(&CompleteBatch { batch: &b, labels: permuted, k: 3 }, &cache).unwrap();
        assert!((a - c).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn degenerate_assignment_and_fallbacks() {
        let b = gaussian_batch(1, &[(0.0, 0.0)], 50, 1.0, 5);
        let cache = cache_for(2, 50, 3);
        let mut labels = vec![0; 50];
        labels[0] = 1;
        let y = CompleteBatch { batch: &b, labels, k: 2 };
        assert!(matches!(
            complete_nml_codelength(&y, &cache),
            Err(Error::DegenerateAssignment { cluster: 1, count: 1, needed: 4 })
        ));
        // A component far from all data is starved under every assignment.
        let model = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.0, 0.0], vec![100.0, 100.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
        };
        let out = model_codelength(&b, &model, &cache, LabelMode::Sample, 1).unwrap();
        assert_eq!(out.resolution, Resolution::Merged);
        let y1 = CompleteBatch { batch: &b, labels: vec![0; 50], k: 1 };
        let nll = complete_negative_log_likelihood(&y1, 1e-3, false).unwrap();
        let expect = nll + cache.log_complexity(50, 2).unwrap();
        assert!((out.codelength - expect).abs() < 1e-9 * expect.abs());
    }
}
