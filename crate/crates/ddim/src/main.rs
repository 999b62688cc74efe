// SPDX-License-Identifier: MIT OR Apache-2.0
#![forbid(unsafe_code)]

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddim::cache_io::{read_cache, write_cache};
use ddim::config::{parse_detectors, Family, RunConfig, DEFAULT_K_MAX};
use ddim::error::{exit, AppError, Result};
use ddim::export::{export, Series};
use ddim::report::{evaluate_trace, summarize, write_summary_file, RunReport, SummaryRow};
use ddim::runner::run_stream;
use ddim::stream_io::{
    annotations_path, read_annotations, read_batch_stream, read_json, write_annotations, write_batch_stream,
    write_json, AnnotationFile, Generator, ANNOTATIONS_VERSION,
};
use ddim::trace::{read_trace, write_trace};
use ddim_core::datagen::{gen_ar_stream, gen_gmm_stream, ArStreamConfig, GmmStreamConfig};
use ddim_core::evaluation::DEFAULT_HORIZON;
use ddim_core::{ComplexityCache, ComplexityConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ddim", version, about = "Change-sign detection from descriptive dimensionality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate mixture parametric complexities.
    Precompute {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n_max: usize,
        #[arg(long)]
        k_max: usize,
        #[arg(long = "R")]
        radius: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic stream and its annotation sidecar.
    Synth {
        #[arg(value_enum)]
        family: Family,
        /// Generator settings as JSON; the standard gradual-change setup when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a stream and write its trace.
    Run {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        input: PathBuf,
        /// Complexity table for mixture runs; derived from the first batch when absent.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Comma separated detector names, or `all`.
        #[arg(long, default_value = "all")]
        detectors: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        k_max: Option<usize>,
        /// Base run settings as JSON; the flags above take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Benefit-FAR evaluation of one or more traces.
    Eval {
        #[arg(long, required = true)]
        trace: Vec<PathBuf>,
        /// One sidecar per trace, or a single one shared by all.
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long = "U", default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
        /// Per-detector mean and standard deviation of the AUC across traces.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Export a trace series as CSV.
    PlotData {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum)]
        series: Series,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::SUCCESS });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Precompute {
            m,
            n_max,
            k_max,
            radius,
            eps,
            out,
        } => {
            let config = ComplexityConfig {
                dim: m,
                radius,
                eps,
                n_max,
                k_max,
            };
            config.validate().map_err(|e| AppError::Usage(e.to_string()))?;
            write_cache(&out, &ComplexityCache::build(config)?)
        }
        Command::Synth {
            family,
            config,
            seed,
            out,
        } => synth(family, config.as_deref(), seed, &out),
        Command::Run {
            family,
            input,
            cache,
            detectors,
            out,
            seed,
            k_max,
            config,
        } => {
            let mut run = match &config {
                Some(path) => read_json::<RunConfig>(path)?,
                None => RunConfig::new(family, DEFAULT_K_MAX, seed),
            };
            run.family = family;
            run.seed = seed;
            run.detectors = parse_detectors(&detectors)?;
            run.input = Some(input.clone());
            run.cache = cache.clone();
            run.output = Some(out.clone());
            let table = match &cache {
                Some(path) if family == Family::Gmm => Some(read_cache(path)?),
                Some(_) => return Err(AppError::Usage("--cache applies to mixture runs only".into())),
                None => None,
            };
            match (k_max, &table) {
                (Some(k), _) => run.k_max = k,
                (None, Some(t)) => run.k_max = t.config().k_max,
                (None, None) => {}
            }
            let batches = read_batch_stream(&input)?;
            let trace = run_stream(&run, &batches, table)?;
            write_trace(&trace, &out)
        }
        Command::Eval {
            trace,
            annotations,
            horizon,
            out,
            summary,
        } => {
            if annotations.len() != 1 && annotations.len() != trace.len() {
                return Err(AppError::Usage(format!(
                    "{} traces but {} annotation files",
                    trace.len(),
                    annotations.len()
                )));
            }
            let mut runs = Vec::with_capacity(trace.len());
            for (i, path) in trace.iter().enumerate() {
                let ann = read_annotations(&annotations[i.min(annotations.len() - 1)])?;
                let mut report = evaluate_trace(&read_trace(path)?, &ann.annotations, horizon)?;
                report.trace = Some(path.clone());
                runs.push(report);
            }
            let rows = summarize(&runs);
            if let Some(path) = &summary {
                write_summary_file(path, &rows)?;
            }
            write_json(&out, &EvalOutput { runs, summary: rows })
        }
        Command::PlotData { trace, series, out } => {
            let trace = read_trace(&trace)?;
            let file = File::create(&out).map_err(|e| AppError::io(&out, e))?;
            export(BufWriter::new(file), &trace, series).map_err(|e| AppError::format(&out, e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct EvalOutput {
    runs: Vec<RunReport>,
    summary: Vec<SummaryRow>,
}

fn synth(family: Family, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let (batches, annotations, generator) = match family {
        Family::Gmm => {
            let mut cfg = match config {
                Some(p) => read_json::<GmmStreamConfig>(p)?,
                None => GmmStreamConfig::dataset1(0.5, 0),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            let (b, a) = gen_gmm_stream(&cfg)?;
            (b, a, Generator::Gmm(cfg))
        }
        Family::Ar => {
            let mut cfg = match config {
                Some(p) => read_json::<ArStreamConfig>(p)?,
                None => ArStreamConfig::dataset3(0),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            let (b, a) = gen_ar_stream(&cfg)?;
            (b, a, Generator::Ar(cfg))
        }
    };
    write_batch_stream(out, &batches)?;
    write_annotations(
        &annotations_path(out),
        &AnnotationFile {
            version: ANNOTATIONS_VERSION,
            annotations,
            generator: Some(generator),
        },
    )
}
