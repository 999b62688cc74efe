// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One time step's observations: `n` rows of dimension `m`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBatch {
    t: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DataBatch {
    pub fn new(t: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("batch dimension must be >= 1"));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::config(format!(
                "batch at t={t} has {} values, not a positive multiple of dimension {dim}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "batch at t={t} has a non-finite entry in row {}",
                i / dim
            )));
        }
        Ok(Self { t, dim, values })
    }

    pub fn from_rows(t: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::config(format!("batch at t={t} has ragged rows")));
        }
        Self::new(t, dim, rows.concat())
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample mean and the maximum-likelihood (divide-by-n) covariance, row-major.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.dim;
        let n = self.len() as f64;
        let mut mean = alloc::vec![0.0; m];
        for row in self.rows() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut cov = alloc::vec![0.0; m * m];
        for row in self.rows() {
            for a in 0..m {
                let da = row[a] - mean[a];
                for b in 0..m {
                    cov[a * m + b] += da * (row[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= n);
        (mean, cov)
    }
}
