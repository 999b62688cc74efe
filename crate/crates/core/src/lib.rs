// SPDX-License-Identifier: MIT OR Apache-2.0
#![forbid(unsafe_code)]
#![no_std]
// Float methods come from `num_traits::Float`; in test builds and some
// feature-unified workspace builds the std ones shadow it.
#![allow(unused_imports)]

//! Streaming continuous model selection.
//!
//! The crate computes the real-valued *descriptive dimensionality* (Ddim) of
//! the model behind a stream of data batches. For every batch and every
//! candidate model index `k` (Gaussian mixture size or autoregression order)
//! a normalized-maximum-likelihood codelength is computed; the codelengths are
//! turned into an annealed posterior over `k`, whose mean is the Ddim. Change
//! signs are raised by thresholding how far the Ddim sits from the discrete
//! selection (TH) or how fast it moves (Diff), alongside the baseline
//! detectors used for comparison.
//!
//! Everything here is `no_std` with `alloc`; file formats, the experiment
//! runner and the command line live in the companion `ddim` crate.


extern crate alloc;

pub mod ar;
pub mod batch;
pub mod complexity;
pub mod datagen;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod pipeline;
pub mod quadrature;
pub mod selector;
pub mod special;

pub use batch::DataBatch;
pub use complexity::{ComplexityCache, ComplexityConfig};
pub use error::{Error, Result};
pub use gmm::GmmModel;
pub use pipeline::{StepRecord, StreamScorer};
pub use selector::ModelPosterior;
