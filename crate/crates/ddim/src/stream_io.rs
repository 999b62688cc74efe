// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch streams as CSV: a header `t,x_1,...,x_m`, then one row per
//! observation with rows of the same `t` forming one batch.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ddim_core::datagen::{Annotations, ArStreamConfig, GmmStreamConfig};
use ddim_core::DataBatch;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub fn read_batch_stream(path: &Path) -> Result<Vec<DataBatch>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_batch_stream_from(BufReader::new(file), path)
}

/// Parses a stream from any reader; `origin` only labels errors.
pub fn read_batch_stream_from<R: Read>(reader: R, origin: &Path) -> Result<Vec<DataBatch>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_error(origin, e))?,
    };
    let dim = check_header(&header, origin)?;

    let mut batches = Vec::new();
    let mut current: Option<(usize, Vec<f64>)> = None;
    for record in records {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != dim + 1 {
            return Err(AppError::parse(
                origin,
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let t: usize = record[0]
            .parse()
            .map_err(|_| AppError::parse(origin, line, format!("invalid step index {:?}", &record[0])))?;
        if t == 0 {
            return Err(AppError::parse(origin, line, "step indices start at 1"));
        }
        match &mut current {
            Some((cur_t, values)) if *cur_t == t => push_values(values, &record, origin, line)?,
            Some((cur_t, _)) if t < *cur_t => {
                return Err(AppError::parse(
                    origin,
                    line,
                    format!("step {t} follows step {cur_t}; rows must be grouped by increasing t"),
                ));
            }
            _ => {
                if let Some((cur_t, values)) = current.take() {
                    batches.push(DataBatch::new(cur_t, dim, values)?);
                }
                let mut values = Vec::new();
                push_values(&mut values, &record, origin, line)?;
                current = Some((t, values));
            }
        }
    }
    if let Some((t, values)) = current {
        batches.push(DataBatch::new(t, dim, values)?);
    }
    Ok(batches)
}

fn check_header(header: &csv::StringRecord, origin: &Path) -> Result<usize> {
    let line = header.position().map_or(1, |p| p.line());
    if header.len() < 2 || &header[0] != "t" {
        return Err(AppError::parse(origin, line, "header must be `t,x_1,...,x_m`"));
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("x_{i}") {
            return Err(AppError::parse(origin, line, format!("column {} is {name:?}, expected \"x_{i}\"", i + 1)));
        }
    }
    Ok(header.len() - 1)
}

fn push_values(values: &mut Vec<f64>, record: &csv::StringRecord, origin: &Path, line: u64) -> Result<()> {
    for field in record.iter().skip(1) {
        let v: f64 = field
            .parse()
            .map_err(|_| AppError::parse(origin, line, format!("invalid number {field:?}")))?;
        if !v.is_finite() {
            return Err(AppError::parse(origin, line, format!("non-finite value {field:?}")));
        }
        values.push(v);
    }
    Ok(())
}

fn csv_error(origin: &Path, e: csv::Error) -> AppError {
    let line = e.position().map_or(0, |p| p.line());
    AppError::parse(origin, line, e.to_string())
}

pub fn write_batch_stream(path: &Path, batches: &[DataBatch]) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_batch_stream_to(&mut w, batches).map_err(|e| AppError::io(path, e))?;
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Writes every value in Rust's shortest round-trip form.
pub fn write_batch_stream_to<W: Write>(w: &mut W, batches: &[DataBatch]) -> std::io::Result<()> {
    let Some(dim) = batches.first().map(DataBatch::dim) else {
        return Ok(());
    };
    let mut csv = csv::Writer::from_writer(w);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("x_{i}")))
        .collect();
    csv.write_record(&header)?;
    let mut fields = Vec::with_capacity(dim + 1);
    for b in batches {
        if b.dim() != dim {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("batch {} has dimension {}, stream has {dim}", b.t(), b.dim()),
            ));
        }
        for row in b.rows() {
            fields.clear();
            fields.push(b.t().to_string());
            fields.extend(row.iter().map(f64::to_string));
            csv.write_record(&fields)?;
        }
    }
    csv.flush()
}

/// Generator that produced a synthetic stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "config", rename_all = "snake_case")]
pub enum Generator {
    Gmm(GmmStreamConfig),
    Ar(ArStreamConfig),
}

pub const ANNOTATIONS_VERSION: u32 = 1;

/// Sidecar written next to a synthetic stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub version: u32,
    #[serde(flatten)]
    pub annotations: Annotations,
    pub generator: Option<Generator>,
}

/// `stream.csv` → `stream.annotations.json`.
pub fn annotations_path(stream: &Path) -> PathBuf {
    stream.with_extension("annotations.json")
}

pub fn write_annotations(path: &Path, file: &AnnotationFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_annotations(path: &Path) -> Result<AnnotationFile> {
    let file: AnnotationFile = read_json(path)?;
    if file.version != ANNOTATIONS_VERSION {
        return Err(AppError::Schema {
            path: path.to_path_buf(),
            found: file.version,
            expected: ANNOTATIONS_VERSION,
        });
    }
    Ok(file)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AppError::format(path, e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| {
        if e.is_io() {
            AppError::format(path, e.to_string())
        } else {
            AppError::parse(path, e.line() as u64, e.to_string())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<DataBatch>> {
        read_batch_stream_from(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn two_batches() {
        let text = "t,x_1,x_2\n1,0.5,1\n1,2,3\n1,-1,4e-3\n2,1,1\n2,2,2\n2,3,3\n";
        let batches = parse(text).unwrap();
        assert_eq!(batches.len(), 2);
        for (i, b) in batches.iter().enumerate() {
            assert_eq!((b.t(), b.len(), b.dim()), (i + 1, 3, 2));
        }
        assert_eq!(batches[0].row(2), &[-1.0, 4e-3]);
    }

    #[test]
    fn empty_input_is_an_empty_stream() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("t,x_1\n").unwrap().is_empty());
    }

    #[test]
    fn nan_is_reported_with_its_line() {
        let err = parse("t,x_1\n1,0.5\n1,NaN\n").unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("mem.csv:3"));
    }

    #[test]
    fn ragged_and_unordered_rows() {
        let err = parse("t,x_1,x_2\n1,0.5,1\n1,2\n").unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 3, .. }), "{err}");
        let err = parse("t,x_1\n2,1\n1,1\n").unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 3, .. }), "{err}");
        let err = parse("t,x_1\n0,1\n").unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_header() {
        assert!(matches!(parse("time,x_1\n1,2\n"), Err(AppError::Parse { line: 1, .. })));
        assert!(matches!(parse("t,x_2\n1,2\n"), Err(AppError::Parse { line: 1, .. })));
    }

    #[test]
    fn blank_trailing_lines_are_ignored() {
        assert_eq!(parse("t,x_1\n1,2\n\n").unwrap().len(), 1);
    }

    #[test]
    fn annotations_path_sits_next_to_the_stream() {
        assert_eq!(annotations_path(Path::new("out/s.csv")), Path::new("out/s.annotations.json"));
    }
}
