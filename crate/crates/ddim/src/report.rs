// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-run evaluation reports and the cross-trial summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use ddim_core::datagen::Annotations;
use ddim_core::detectors::{AlarmEvent, DetectorKind};
use ddim_core::evaluation::{benefit_far_auc, mean_std, CurvePoint, EvalConfig};
use ddim_core::pipeline::score_series;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::trace::DdimTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub detector: DetectorKind,
    pub auc: f64,
    pub curve: Vec<CurvePoint>,
    /// Alarms raised during the run at its configured threshold.
    pub alarms: Vec<AlarmEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace: Option<PathBuf>,
    pub horizon: usize,
    pub sign_times: Vec<usize>,
    pub detectors: Vec<DetectorReport>,
}

pub fn evaluate_trace(trace: &DdimTrace, annotations: &Annotations, horizon: usize) -> Result<RunReport> {
    let span = trace.records.first().zip(trace.records.last()).map(|(a, b)| a.t..=b.t);
    if let Some(&t) = annotations.sign_times.iter().find(|t| !span.as_ref().is_some_and(|s| s.contains(t))) {
        return Err(AppError::Core(ddim_core::Error::Config(format!(
            "sign time {t} lies outside the traced steps {span:?}"
        ))));
    }
    let cfg = EvalConfig::new(horizon, annotations.sign_times.clone(), annotations.transitions.clone());
    let detectors = DetectorKind::ALL
        .into_iter()
        .map(|d| {
            let curve = benefit_far_auc(&score_series(&trace.records, d), &cfg)?;
            let alarms = trace
                .records
                .iter()
                .flat_map(|r| r.alarms.iter().filter(|a| a.detector == d).copied())
                .collect();
            Ok(DetectorReport {
                detector: d,
                auc: curve.auc,
                curve: curve.points,
                alarms,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunReport {
        trace: None,
        horizon,
        sign_times: annotations.sign_times.clone(),
        detectors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: DetectorKind,
    pub trials: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
}

pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    DetectorKind::ALL
        .into_iter()
        .map(|d| {
            let aucs: Vec<f64> = reports
                .iter()
                .flat_map(|r| r.detectors.iter().filter(|x| x.detector == d).map(|x| x.auc))
                .collect();
            let (mean_auc, std_auc) = mean_std(&aucs);
            SummaryRow {
                detector: d,
                trials: aucs.len(),
                mean_auc,
                std_auc,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    write_summary_csv(std::io::BufWriter::new(file), rows).map_err(|e| AppError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Family, RunConfig};
    use crate::trace::TraceHeader;
    use ddim_core::pipeline::{ScorerConfig, StreamScorer};

    /// Codelengths favouring `k = 1` until step 5, then `k = 2`.
    fn switching_trace() -> DdimTrace {
        let mut scorer = StreamScorer::new(ScorerConfig::new(2)).unwrap();
        let records = (1..=10)
            .map(|t| {
                let l = if t < 5 { [0.0, 50.0] } else { [50.0, 0.0] };
                scorer.step(t, &l, 100).unwrap()
            })
            .collect();
        DdimTrace {
            header: TraceHeader::new(RunConfig::new(Family::Gmm, 2, 0)),
            records,
        }
    }

    fn annotations() -> Annotations {
        Annotations {
            true_k: vec![1, 1, 1, 1, 2, 2, 2, 2, 2, 2],
            transitions: vec![(5, 5)],
            sign_times: vec![5],
        }
    }

    #[test]
    fn clean_switch_is_detected() {
        let report = evaluate_trace(&switching_trace(), &annotations(), 3).unwrap();
        assert_eq!(report.detectors.len(), 7);
        let sdms = report.detectors.iter().find(|d| d.detector == DetectorKind::Sdms).unwrap();
        assert!(sdms.auc > 0.99, "{}", sdms.auc);
        assert!(sdms.alarms.iter().any(|a| a.t == 5));
        for d in &report.detectors {
            assert!((0.0..=1.0).contains(&d.auc));
        }
    }

    #[test]
    fn summary_over_runs() {
        let r = evaluate_trace(&switching_trace(), &annotations(), 3).unwrap();
        let rows = summarize(&[r.clone(), r]);
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|row| row.trials == 2 && row.std_auc == 0.0));
        let mut out = Vec::new();
        write_summary_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("detector,trials,mean_auc,std_auc\nth,2,"), "{text}");
    }

    #[test]
    fn sign_time_outside_the_run_is_an_error() {
        let mut ann = annotations();
        ann.sign_times = vec![0];
        assert!(evaluate_trace(&switching_trace(), &ann, 3).is_err());
    }
}
