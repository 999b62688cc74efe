// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use ddim_core::datagen::{gen_ar_stream, gen_gmm_stream, Annotations, ArStreamConfig, GmmStreamConfig};
use ddim_core::detectors::DetectorKind;
use ddim_core::evaluation::{benefit_far_auc, EvalConfig};
use ddim_core::pipeline::{
    score_series, score_stream, suggest_complexity_config, ArSource, ArSourceOptions, GmmSource, StreamScorer,
};
use ddim_core::{ComplexityCache, DataBatch};

use crate::cache_io::config_hash;
use crate::config::{Family, RunConfig};
use crate::error::{AppError, Result};
use crate::trace::{DdimTrace, TraceHeader};

/// Scores a stream. Mixture runs without a cache derive one from the first
/// batch; its settings go into the trace header.
pub fn run_stream(config: &RunConfig, batches: &[DataBatch], cache: Option<ComplexityCache>) -> Result<DdimTrace> {
    config.validate()?;
    let mut header = TraceHeader::new(config.clone());
    let Some(first) = batches.first() else {
        return Ok(DdimTrace {
            header,
            records: Vec::new(),
        });
    };
    let dim = first.dim();
    if let Some(b) = batches.iter().find(|b| b.dim() != dim) {
        return Err(AppError::Core(ddim_core::Error::Config(format!(
            "batch {} has dimension {}, stream has {dim}",
            b.t(),
            b.dim()
        ))));
    }
    let mut scorer = StreamScorer::new(config.scorer_config(dim))?;
    let records = match config.family {
        Family::Gmm => {
            let max_batch = batches.iter().map(DataBatch::len).max().unwrap_or(0);
            let cache = match cache {
                Some(c) => c,
                None => ComplexityCache::build(suggest_complexity_config(first, max_batch, config.k_max)?)?,
            };
            config.check_complexity(cache.config(), dim, max_batch)?;
            header.complexity = Some(*cache.config());
            header.complexity_hash = Some(config_hash(cache.config()));
            let mut source = GmmSource::new(cache, config.gmm, config.seed);
            score_stream(batches, &mut scorer, |b| source.codelengths(b))?
        }
        Family::Ar => {
            let mut options = ArSourceOptions::new(config.k_max);
            if let Some(h) = config.ar_history {
                options.history = h;
            }
            options.nml = config.ar_nml;
            let mut source = ArSource::new(options)?;
            score_stream(batches, &mut scorer, |b| source.codelengths(b))?
        }
    };
    Ok(DdimTrace { header, records })
}

/// One synthetic stream scored end to end.
#[derive(Debug, Clone)]
pub struct Trial {
    pub trace: DdimTrace,
    pub annotations: Annotations,
}

pub fn gmm_trial(stream: &GmmStreamConfig, k_max: usize) -> Result<Trial> {
    let (batches, annotations) = gen_gmm_stream(stream)?;
    let run = RunConfig::new(Family::Gmm, k_max, stream.seed);
    Ok(Trial {
        trace: run_stream(&run, &batches, None)?,
        annotations,
    })
}

pub fn ar_trial(stream: &ArStreamConfig, k_max: usize) -> Result<Trial> {
    let (batches, annotations) = gen_ar_stream(stream)?;
    let run = RunConfig::new(Family::Ar, k_max, stream.seed);
    Ok(Trial {
        trace: run_stream(&run, &batches, None)?,
        annotations,
    })
}

/// Benefit-FAR AUC of every detector.
pub fn detector_aucs(trace: &DdimTrace, annotations: &Annotations, horizon: usize) -> Result<BTreeMap<DetectorKind, f64>> {
    let cfg = EvalConfig::new(horizon, annotations.sign_times.clone(), annotations.transitions.clone());
    DetectorKind::ALL
        .into_iter()
        .map(|d| Ok((d, benefit_far_auc(&score_series(&trace.records, d), &cfg)?.auc)))
        .collect()
}

/// Mean Ddim over all steps.
pub fn mean_ddim(trace: &DdimTrace) -> f64 {
    let n = trace.records.len().max(1) as f64;
    trace.records.iter().map(|r| r.ddim).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddim_core::datagen::ChangeSchedule;

    fn small_gmm(seed: u64) -> GmmStreamConfig {
        let mut cfg = GmmStreamConfig::dataset1(1.0, seed);
        cfg.n = 150;
        cfg.steps = 6;
        cfg.first = ChangeSchedule { tau1: 2, tau2: 4 };
        cfg
    }

    #[test]
    fn empty_stream_gives_an_empty_trace() {
        let trace = run_stream(&RunConfig::new(Family::Gmm, 3, 0), &[], None).unwrap();
        assert!(trace.records.is_empty());
    }

    #[test]
    fn mixture_run_records_its_complexity_table() {
        let trial = gmm_trial(&small_gmm(3), 3).unwrap();
        let h = &trial.trace.header;
        let cc = h.complexity.expect("mixture runs record the table");
        assert_eq!((cc.dim, cc.n_max, cc.k_max), (3, 150, 3));
        assert_eq!(h.complexity_hash.as_deref(), Some(config_hash(&cc).as_str()));
        assert_eq!(trial.trace.records.len(), 6);
        for r in &trial.trace.records {
            assert!((1.0..=3.0).contains(&r.ddim));
            assert_eq!(r.codelengths.len(), 3);
        }
        let aucs = detector_aucs(&trial.trace, &trial.annotations, 3).unwrap();
        assert_eq!(aucs.len(), 7);
        assert!(aucs.values().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn given_cache_must_match() {
        let (batches, _) = gen_gmm_stream(&small_gmm(1)).unwrap();
        let cc = suggest_complexity_config(&batches[0], 100, 3).unwrap();
        let cache = ComplexityCache::build(cc).unwrap();
        let err = run_stream(&RunConfig::new(Family::Gmm, 3, 0), &batches, Some(cache)).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn dimension_changes_are_rejected() {
        let a = DataBatch::new(1, 1, vec![0.0; 50]).unwrap();
        let b = DataBatch::new(2, 2, vec![0.0; 50]).unwrap();
        assert!(run_stream(&RunConfig::new(Family::Ar, 2, 0), &[a, b], None).is_err());
    }

    #[test]
    fn ar_run() {
        let mut cfg = ArStreamConfig::dataset3(2);
        cfg.n = 200;
        cfg.steps = 5;
        cfg.first = ChangeSchedule { tau1: 1, tau2: 3 };
        let trial = ar_trial(&cfg, 3).unwrap();
        assert!(trial.trace.header.complexity.is_none());
        assert_eq!(trial.trace.records.len(), 5);
        assert!(trial.trace.records.iter().all(|r| r.label_seed.is_none()));
    }
}
