// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-step scoring shared by every model family.
//!
//! A codelength source turns a batch into the vector `L_k`, `k = 1..=K`;
//! [`StreamScorer`] turns that vector into the posterior, the Ddim and every
//! detector score. GMM and AR runs only differ in the source.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ar::{sequential_nml_ar, ArNmlOptions, ArWindow};
use crate::batch::DataBatch;
use crate::complexity::{ComplexityCache, ComplexityConfig};
use crate::detectors::{check_alarm, diff_score, fsw_scores, sdms_step, th_score, AlarmEvent, DetectorKind, FixedShareState};
use crate::error::{Error, Result};
use crate::gmm::{em_fit_warm, model_codelength, EmOptions, GmmModel, LabelMode, Resolution};
use crate::selector::{ddim, ddim_unnormalized, model_posterior, structural_entropy, temperature, SelectorState};

/// SplitMix64 finalizer, used to derive independent per-step seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scores of every detector at one step. Difference scores are absent on
/// the first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorScores {
    pub th: f64,
    pub diff: Option<f64>,
    pub sdms: f64,
    pub fs: f64,
    pub fsw_th: f64,
    pub fsw_diff: Option<f64>,
    pub se: f64,
}

impl DetectorScores {
    pub fn get(&self, kind: DetectorKind) -> Option<f64> {
        match kind {
            DetectorKind::Th => Some(self.th),
            DetectorKind::Diff => self.diff,
            DetectorKind::Sdms => Some(self.sdms),
            DetectorKind::Fs => Some(self.fs),
            DetectorKind::FswTh => Some(self.fsw_th),
            DetectorKind::FswDiff => self.fsw_diff,
            DetectorKind::Se => Some(self.se),
        }
    }
}

/// Serializes non-finite codelengths as `null`.
mod codelength_serde {
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|&x| x.is_finite().then_some(x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt = Vec::<Option<f64>>::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Batch size.
    pub n: usize,
    /// `L_k` in nats; `null` in JSON when a model could not be fitted.
    #[serde(with = "codelength_serde")]
    pub codelengths: Vec<f64>,
    pub posterior: Vec<f64>,
    pub ddim: f64,
    /// `Σ p(k)(k f(m) - 1)` for mixture runs.
    #[serde(default)]
    pub ddim_unnormalized: Option<f64>,
    pub entropy: f64,
    /// Sequential dynamic model selection output.
    pub k_hat: usize,
    pub fs_best: usize,
    pub fs_weights: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub scores: DetectorScores,
    pub alarms: Vec<AlarmEvent>,
    /// Seed the latent assignments of this step were drawn from.
    #[serde(default)]
    pub label_seed: Option<u64>,
    /// How degenerate assignments were resolved, per `k`.
    #[serde(default)]
    pub resolutions: Option<Vec<Option<Resolution>>>,
}

pub fn default_thresholds() -> BTreeMap<DetectorKind, f64> {
    DetectorKind::ALL
        .into_iter()
        .map(|d| {
            let v = match d {
                DetectorKind::Sdms | DetectorKind::Fs => 0.5,
                DetectorKind::Se => 0.5,
                _ => 0.1,
            };
            (d, v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub max_k: usize,
    /// Weight of the transition prior in the discrete selection.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Fixed temperature; `1/√n` when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Fixed sharing rate; the current `γ̂` when absent.
    #[serde(default)]
    pub fs_alpha: Option<f64>,
    /// Data dimension, for the unnormalized mixture Ddim.
    #[serde(default)]
    pub mixture_dim: Option<usize>,
    /// Alarm thresholds of the detectors to report.
    #[serde(default = "default_thresholds")]
    pub thresholds: BTreeMap<DetectorKind, f64>,
}

fn one() -> f64 {
    1.0
}

impl ScorerConfig {
    pub fn new(max_k: usize) -> Self {
        Self {
            max_k,
            lambda: 1.0,
            beta: None,
            fs_alpha: None,
            mixture_dim: None,
            thresholds: default_thresholds(),
        }
    }
}

/// Selector and detector state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamScorer {
    pub config: ScorerConfig,
    selector: SelectorState,
    fixed_share: FixedShareState,
    prev_ddim: Option<f64>,
    prev_fsw_ddim: Option<f64>,
    prev_fs_best: Option<usize>,
}

impl StreamScorer {
    pub fn new(config: ScorerConfig) -> Result<Self> {
        if config.max_k == 0 {
            return Err(Error::config("max_k must be >= 1"));
        }
        let fixed_share = FixedShareState::uniform(config.max_k, 0.0, 1.0);
        Ok(Self {
            selector: SelectorState::new(config.max_k),
            fixed_share,
            prev_ddim: None,
            prev_fsw_ddim: None,
            prev_fs_best: None,
            config,
        })
    }

    pub fn selector(&self) -> &SelectorState {
        &self.selector
    }

    /// Scores one step from its codelengths.
    pub fn step(&mut self, t: usize, codelengths: &[f64], n: usize) -> Result<StepRecord> {
        let max_k = self.config.max_k;
        if codelengths.len() != max_k {
            return Err(Error::config(alloc::format!(
                "{} codelengths for max_k = {max_k}",
                codelengths.len()
            )));
        }
        let gamma = self.selector.gamma();
        let beta = self.config.beta.unwrap_or_else(|| temperature(n));
        let k_prev = self.selector.k_prev;
        let posterior = model_posterior(codelengths, k_prev, gamma, beta, t)?;
        let k_hat = sdms_step(codelengths, k_prev, gamma, self.config.lambda)?;
        let d = ddim(&posterior);
        let entropy = structural_entropy(&posterior);

        self.fixed_share.alpha = self.config.fs_alpha.unwrap_or(gamma);
        self.fixed_share.beta = beta;
        self.fixed_share.update(codelengths)?;
        let fs_best = self.fixed_share.best_expert();
        let fsw = fsw_scores(&self.fixed_share, k_hat, self.prev_fsw_ddim);

        let changed = |prev: Option<usize>, now: usize| if prev.is_some_and(|p| p != now) { 1.0 } else { 0.0 };
        let scores = DetectorScores {
            th: th_score(d, k_hat),
            diff: diff_score(d, self.prev_ddim),
            sdms: changed(k_prev, k_hat),
            fs: changed(self.prev_fs_best, fs_best),
            fsw_th: fsw.th,
            fsw_diff: fsw.diff,
            se: entropy,
        };
        let alarms = self
            .config
            .thresholds
            .iter()
            .filter_map(|(&kind, &th)| scores.get(kind).and_then(|s| check_alarm(t, kind, s, th)))
            .collect();

        self.prev_ddim = Some(d);
        self.prev_fsw_ddim = Some(fsw.ddim);
        self.prev_fs_best = Some(fs_best);
        self.selector.advance(posterior.argmax());

        Ok(StepRecord {
            t,
            n,
            codelengths: codelengths.to_vec(),
            ddim_unnormalized: self.config.mixture_dim.map(|m| ddim_unnormalized(&posterior, m)),
            posterior: posterior.probs,
            ddim: d,
            entropy,
            k_hat,
            fs_best,
            fs_weights: self.fixed_share.weights.clone(),
            gamma,
            beta,
            scores,
            alarms,
            label_seed: None,
            resolutions: None,
        })
    }
}

/// Complexity settings derived from the first batch: `R` is 1.5 times the
/// largest squared row norm and `ε` is 1% of the average per-coordinate
/// variance.
pub fn suggest_complexity_config(first: &DataBatch, n_max: usize, k_max: usize) -> Result<ComplexityConfig> {
    let m = first.dim();
    let radius = 1.5
        * first
            .rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
    let (_, cov) = first.moments();
    let trace: f64 = (0..m).map(|i| cov[i * m + i]).sum();
    let eps = 0.01 * trace / m as f64;
    let config = ComplexityConfig {
        dim: m,
        radius,
        eps,
        n_max,
        k_max,
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmSourceOptions {
    pub em: EmOptions,
    pub label_mode: LabelMode,
    /// Add the previous step's fit as an extra EM start. Off by default:
    /// it tends to carry over spurious small components.
    pub warm_start: bool,
}

impl Default for GmmSourceOptions {
    fn default() -> Self {
        Self {
            em: EmOptions::default(),
            label_mode: LabelMode::Sample,
            warm_start: false,
        }
    }
}

/// Codelengths of one step plus the bookkeeping that goes in the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStep {
    pub codelengths: Vec<f64>,
    pub label_seed: Option<u64>,
    pub resolutions: Option<Vec<Option<Resolution>>>,
}

/// Mixture codelengths: EM per `k`, one sampled latent assignment per
/// `(t, k)`, complete-variable NML codelength.
#[derive(Debug, Clone)]
pub struct GmmSource {
    cache: ComplexityCache,
    options: GmmSourceOptions,
    seed: u64,
    previous: Vec<Option<GmmModel>>,
}

impl GmmSource {
    /// EM covariances are floored at the cache's `ε`, whatever
    /// `options.em.eps` says.
    pub fn new(cache: ComplexityCache, mut options: GmmSourceOptions, seed: u64) -> Self {
        let k_max = cache.config().k_max;
        options.em.eps = cache.config().eps;
        Self {
            cache,
            options,
            seed,
            previous: vec![None; k_max],
        }
    }

    pub fn max_k(&self) -> usize {
        self.cache.config().k_max
    }

    pub fn cache(&self) -> &ComplexityCache {
        &self.cache
    }

    /// Codelengths `L_k` for `k = 1..=K`. Mixture sizes that cannot be
    /// fitted to this batch get an infinite codelength.
    pub fn codelengths(&mut self, batch: &DataBatch) -> Result<SourceStep> {
        let cfg = self.cache.config();
        if batch.dim() != cfg.dim {
            return Err(Error::config(alloc::format!(
                "batch dimension {} does not match cache dimension {}",
                batch.dim(),
                cfg.dim
            )));
        }
        if batch.len() > cfg.n_max {
            return Err(Error::Range {
                n: batch.len(),
                k: 1,
                n_max: cfg.n_max,
                k_max: cfg.k_max,
            });
        }
        let label_seed = mix_seed(self.seed, batch.t() as u64);
        let mut codelengths = Vec::with_capacity(cfg.k_max);
        let mut resolutions = Vec::with_capacity(cfg.k_max);
        for k in 1..=cfg.k_max {
            let em_seed = mix_seed(label_seed, 2 * k as u64);
            let warm = if self.options.warm_start { self.previous[k - 1].as_ref() } else { None };
            let fit = match em_fit_warm(batch, k, em_seed, &self.options.em, warm) {
                Ok(fit) => fit,
                Err(Error::InsufficientData { .. }) => {
                    codelengths.push(f64::INFINITY);
                    resolutions.push(None);
                    self.previous[k - 1] = None;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let labelled = model_codelength(
                batch,
                &fit.model,
                &self.cache,
                self.options.label_mode,
                mix_seed(label_seed, 2 * k as u64 + 1),
            )?;
            codelengths.push(labelled.codelength);
            resolutions.push(Some(labelled.resolution));
            self.previous[k - 1] = Some(fit.model);
        }
        Ok(SourceStep {
            codelengths,
            label_seed: Some(label_seed),
            resolutions: Some(resolutions),
        })
    }
}

/// Lower bound on the default autoregression history.
pub const DEFAULT_AR_HISTORY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArSourceOptions {
    pub max_k: usize,
    /// Values preceding each window used for the initial fit; taken from
    /// the first batch for the first window. Short histories overfit the
    /// noise variance of the higher orders.
    pub history: usize,
    pub nml: ArNmlOptions,
}

impl ArSourceOptions {
    pub fn new(max_k: usize) -> Self {
        Self {
            max_k,
            history: (2 * max_k + 10).max(DEFAULT_AR_HISTORY),
            nml: ArNmlOptions::default(),
        }
    }
}

/// Autoregression codelengths over consecutive windows of one series.
#[derive(Debug, Clone)]
pub struct ArSource {
    options: ArSourceOptions,
    tail: Vec<f64>,
}

impl ArSource {
    pub fn new(options: ArSourceOptions) -> Result<Self> {
        if options.max_k == 0 {
            return Err(Error::config("max_k must be >= 1"));
        }
        if options.history < ArWindow::min_history(options.max_k) {
            return Err(Error::config(alloc::format!(
                "history {} is shorter than the {} values order {} needs",
                options.history,
                ArWindow::min_history(options.max_k),
                options.max_k
            )));
        }
        Ok(Self {
            options,
            tail: Vec::new(),
        })
    }

    pub fn window(&self, batch: &DataBatch) -> Result<ArWindow> {
        if batch.dim() != 1 {
            return Err(Error::config(alloc::format!(
                "autoregression needs univariate batches, got dimension {}",
                batch.dim()
            )));
        }
        let values = batch.values();
        let h = self.options.history;
        let (history, window) = if self.tail.is_empty() {
            if values.len() <= h + self.options.max_k + 2 {
                return Err(Error::InsufficientData {
                    needed: h + self.options.max_k + 3,
                    got: values.len(),
                });
            }
            (values[..h].to_vec(), values[h..].to_vec())
        } else {
            (self.tail.clone(), values.to_vec())
        };
        Ok(ArWindow {
            history,
            values: window,
            t: batch.t(),
        })
    }

    pub fn codelengths(&mut self, batch: &DataBatch) -> Result<SourceStep> {
        let window = self.window(batch)?;
        let codelengths = (1..=self.options.max_k)
            .map(|k| sequential_nml_ar(&window, k, &self.options.nml).map(|s| s.total))
            .collect::<Result<Vec<f64>>>()?;
        let mut all = window.history;
        all.extend_from_slice(&window.values);
        self.tail = all.split_off(all.len() - self.options.history);
        Ok(SourceStep {
            codelengths,
            label_seed: None,
            resolutions: None,
        })
    }
}

/// Runs a whole stream through a source and a scorer.
pub fn score_stream<F>(batches: &[DataBatch], scorer: &mut StreamScorer, mut source: F) -> Result<Vec<StepRecord>>
where
    F: FnMut(&DataBatch) -> Result<SourceStep>,
{
    batches
        .iter()
        .map(|b| {
            let step = source(b)?;
            let mut rec = scorer.step(b.t(), &step.codelengths, b.len())?;
            rec.label_seed = step.label_seed;
            rec.resolutions = step.resolutions;
            Ok(rec)
        })
        .collect()
}

/// `(t, score)` pairs of one detector, skipping steps where it is undefined.
pub fn score_series(records: &[StepRecord], kind: DetectorKind) -> Vec<(usize, f64)> {
    records.iter().filter_map(|r| r.scores.get(kind).map(|s| (r.t, s))).collect()
}
