// SPDX-License-Identifier: MIT OR Apache-2.0
#![forbid(unsafe_code)]

//! File formats, run orchestration and evaluation reports around
//! [`ddim_core`].

pub mod cache_io;
pub mod config;
pub mod error;
pub mod export;
pub mod report;
pub mod runner;
pub mod stream_io;
pub mod trace;

pub use config::{Family, RunConfig};
pub use error::{AppError, Result};
pub use trace::{DdimTrace, TraceHeader};
