// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A function was evaluated outside its mathematical domain.
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },
    /// A table lookup fell outside the precomputed range.
    #[error("({n}, {k}) is outside the tabulated range (n <= {n_max}, 1 <= k <= {k_max})")]
    Range {
        n: usize,
        k: usize,
        n_max: usize,
        k_max: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// A latent assignment left some cluster with too few points for a
    /// covariance estimate.
    #[error("degenerate assignment: cluster {cluster} has {count} points, need at least {needed}")]
    DegenerateAssignment {
        cluster: usize,
        count: usize,
        needed: usize,
    },
    #[error("no candidate model has a finite codelength and positive prior mass")]
    NoValidModel,
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }
}
