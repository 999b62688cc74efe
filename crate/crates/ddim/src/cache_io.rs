// SPDX-License-Identifier: MIT OR Apache-2.0

//! Complexity tables on disk: JSON keyed by a SHA-256 of the config, with
//! `null` standing for `-∞`.

use std::path::Path;

use ddim_core::{ComplexityCache, ComplexityConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};
use crate::stream_io::{read_json, write_json};

pub const CACHE_FORMAT: &str = "ddim-complexity-cache";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    config: ComplexityConfig,
    config_hash: String,
    table: Vec<Option<f64>>,
}

/// Hex SHA-256 of the config's JSON form. Floats serialize in shortest
/// round-trip form, so equal configs hash equally.
pub fn config_hash(config: &ComplexityConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_cache(path: &Path, cache: &ComplexityCache) -> Result<()> {
    let file = CacheFile {
        format: CACHE_FORMAT.to_string(),
        version: CACHE_VERSION,
        config: *cache.config(),
        config_hash: config_hash(cache.config()),
        table: cache.table().iter().map(|&v| v.is_finite().then_some(v)).collect(),
    };
    write_json(path, &file)
}

pub fn read_cache(path: &Path) -> Result<ComplexityCache> {
    let file: CacheFile = read_json(path)?;
    if file.format != CACHE_FORMAT {
        return Err(AppError::format(path, format!("not a complexity cache (format {:?})", file.format)));
    }
    if file.version != CACHE_VERSION {
        return Err(AppError::Schema {
            path: path.to_path_buf(),
            found: file.version,
            expected: CACHE_VERSION,
        });
    }
    let hash = config_hash(&file.config);
    if hash != file.config_hash {
        return Err(AppError::format(
            path,
            format!("config hash {} does not match the stored config ({hash})", file.config_hash),
        ));
    }
    let table = file.table.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
    Ok(ComplexityCache::from_parts(file.config, table)?)
}
