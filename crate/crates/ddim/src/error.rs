// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use ddim_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Process exit statuses of the command line tool.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const NUMERIC: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed input, located by 1-based line number.
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: u64, detail: String },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    Schema { path: PathBuf, found: u32, expected: u32 },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, detail: impl Into<String>) -> Self {
        AppError::Format {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }

    pub fn parse(path: &Path, line: u64, detail: impl Into<String>) -> Self {
        AppError::Parse {
            path: path.to_path_buf(),
            line,
            detail: detail.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => exit::USAGE,
            AppError::Core(e) => match e {
                CoreError::Domain { .. } | CoreError::NoValidModel | CoreError::Quadrature { .. } | CoreError::Numeric(_) => {
                    exit::NUMERIC
                }
                _ => exit::DATA,
            },
            _ => exit::DATA,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(AppError::Usage("x".into()).exit_code(), 1);
        assert_eq!(AppError::parse(Path::new("a.csv"), 3, "bad").exit_code(), 2);
        assert_eq!(AppError::Core(CoreError::Config("x".into())).exit_code(), 2);
        assert_eq!(AppError::Core(CoreError::NoValidModel).exit_code(), 3);
        assert_eq!(AppError::Core(CoreError::Quadrature { lo: 0.0, hi: 1.0 }).exit_code(), 3);
    }

    #[test]
    fn parse_error_names_the_line() {
        let e = AppError::parse(Path::new("s.csv"), 7, "non-finite value");
        assert_eq!(e.to_string(), "s.csv:7: non-finite value");
    }
}
