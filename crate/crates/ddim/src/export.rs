// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat CSV projections of a trace for plotting.

use std::io::Write;

use ddim_core::detectors::DetectorKind;

use crate::trace::DdimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Series {
    /// `t,ddim`
    Ddim,
    /// `t,detector,score`, one row per defined score.
    Scores,
    /// `t,detector,score,threshold`, one row per alarm.
    Alarms,
}

pub fn export<W: Write>(w: W, trace: &DdimTrace, series: Series) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    match series {
        Series::Ddim => {
            csv.write_record(["t", "ddim"])?;
            for r in &trace.records {
                csv.write_record([r.t.to_string(), r.ddim.to_string()])?;
            }
        }
        Series::Scores => {
            csv.write_record(["t", "detector", "score"])?;
            for r in &trace.records {
                for d in DetectorKind::ALL {
                    if let Some(s) = r.scores.get(d) {
                        csv.write_record([r.t.to_string(), d.to_string(), s.to_string()])?;
                    }
                }
            }
        }
        Series::Alarms => {
            csv.write_record(["t", "detector", "score", "threshold"])?;
            for a in trace.records.iter().flat_map(|r| &r.alarms) {
                csv.write_record([a.t.to_string(), a.detector.to_string(), a.score.to_string(), a.threshold.to_string()])?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}
