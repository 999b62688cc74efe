// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run traces as JSON lines: one header line, then one [`StepRecord`] per
//! processed batch.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ddim_core::{ComplexityConfig, StepRecord};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{AppError, Result};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub run: RunConfig,
    /// Complexity table settings of mixture runs.
    #[serde(default)]
    pub complexity: Option<ComplexityConfig>,
    #[serde(default)]
    pub complexity_hash: Option<String>,
}

impl TraceHeader {
    pub fn new(run: RunConfig) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            run,
            complexity: None,
            complexity_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdimTrace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
}

/// Appends records one line at a time.
pub struct TraceWriter<W: Write> {
    out: W,
    last_t: Option<usize>,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| AppError::io(path, e))?;
        TraceWriter::new(BufWriter::new(file), header).map_err(|e| AppError::io(path, e))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> std::io::Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self { out, last_t: None })
    }

    pub fn write(&mut self, record: &StepRecord) -> std::io::Result<()> {
        if self.last_t.is_some_and(|t| record.t <= t) {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("trace step {} is not after step {}", record.t, self.last_t.unwrap_or(0)),
            ));
        }
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.last_t = Some(record.t);
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trace(trace: &DdimTrace, path: &Path) -> Result<()> {
    let mut w = TraceWriter::create(path, &trace.header)?;
    for r in &trace.records {
        w.write(r).map_err(|e| AppError::io(path, e))?;
    }
    w.finish().map_err(|e| AppError::io(path, e))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<DdimTrace> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_trace_from(BufReader::new(file), path)
}

pub fn read_trace_from<R: BufRead>(reader: R, origin: &Path) -> Result<DdimTrace> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !l.as_ref().is_ok_and(|s| s.trim().is_empty()));
    let Some((_, first)) = lines.next() else {
        return Err(AppError::format(origin, "empty trace"));
    };
    let first = first.map_err(|e| AppError::io(origin, e))?;
    let value: serde_json::Value = serde_json::from_str(&first).map_err(|e| AppError::parse(origin, 1, e.to_string()))?;
    let found = value.get("schema_version").and_then(serde_json::Value::as_u64);
    match found {
        Some(v) if v == u64::from(TRACE_SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(AppError::Schema {
                path: origin.to_path_buf(),
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: TRACE_SCHEMA_VERSION,
            })
        }
        None => return Err(AppError::parse(origin, 1, "header has no schema_version")),
    }
    let header: TraceHeader = serde_json::from_value(value).map_err(|e| AppError::parse(origin, 1, e.to_string()))?;

    let mut records: Vec<StepRecord> = Vec::new();
    for (i, line) in lines {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| AppError::io(origin, e))?;
        let rec: StepRecord = serde_json::from_str(&line).map_err(|e| AppError::parse(origin, lineno, e.to_string()))?;
        if let Some(prev) = records.last() {
            if rec.t <= prev.t {
                return Err(AppError::parse(
                    origin,
                    lineno,
                    format!("step {} does not follow step {}", rec.t, prev.t),
                ));
            }
        }
        records.push(rec);
    }
    Ok(DdimTrace { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Family;
    use ddim_core::pipeline::{ScorerConfig, StreamScorer};

    fn sample_trace() -> DdimTrace {
        let mut scorer = StreamScorer::new(ScorerConfig::new(3)).unwrap();
        let steps = [[10.0, 4.5, 7.25], [9.0, f64::INFINITY, 1.0 / 3.0], [2.0, 3.0, 5.5e-7]];
        let records = steps
            .iter()
            .enumerate()
            .map(|(i, l)| scorer.step(i + 1, l, 100).unwrap())
            .collect();
        DdimTrace {
            header: TraceHeader::new(RunConfig::new(Family::Gmm, 3, 9)),
            records,
        }
    }

    fn bytes(trace: &DdimTrace) -> Vec<u8> {
        let mut w = TraceWriter::new(Vec::new(), &trace.header).unwrap();
        for r in &trace.records {
            w.write(r).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let trace = sample_trace();
        let data = bytes(&trace);
        let back = read_trace_from(&data[..], Path::new("mem")).unwrap();
        assert_eq!(back, trace);
        assert_eq!(bytes(&back), data);
        assert_eq!(back.records[1].codelengths[1], f64::INFINITY);
    }

    #[test]
    fn one_line_per_step() {
        let trace = sample_trace();
        let text = String::from_utf8(bytes(&trace)).unwrap();
        assert_eq!(text.lines().count(), 1 + trace.records.len());
        assert!(text.lines().next().unwrap().contains("\"schema_version\":1"));
    }

    #[test]
    fn schema_mismatch_is_versioned() {
        let trace = sample_trace();
        let text = String::from_utf8(bytes(&trace)).unwrap().replacen("\"schema_version\":1", "\"schema_version\":7", 1);
        let err = read_trace_from(text.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, AppError::Schema { found: 7, expected: 1, .. }), "{err}");
    }

    #[test]
    fn steps_must_increase() {
        let mut trace = sample_trace();
        trace.records.swap(0, 1);
        let mut w = TraceWriter::new(Vec::new(), &trace.header).unwrap();
        w.write(&trace.records[0]).unwrap();
        assert!(w.write(&trace.records[1]).is_err());

        let mut text = String::from_utf8(bytes(&sample_trace())).unwrap();
        let last = text.lines().last().unwrap().to_string();
        text.push_str(&last);
        text.push('\n');
        let err = read_trace_from(text.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn empty_or_broken_files() {
        assert!(matches!(read_trace_from(&b""[..], Path::new("mem")), Err(AppError::Format { .. })));
        assert!(matches!(read_trace_from(&b"{}\n"[..], Path::new("mem")), Err(AppError::Parse { line: 1, .. })));
    }
}
