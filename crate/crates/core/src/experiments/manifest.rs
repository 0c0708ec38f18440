//! Run manifests: everything needed to regenerate a report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Version of the report and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub master_seed: u64,
    pub workers: usize,
    pub versions: BTreeMap<String, String>,
    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Only recorded in the stand-alone manifest file, so that report files
    /// stay byte-identical across reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RunManifest {
    /// Manifest for `config` run with the current rayon pool.
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        Ok(RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            master_seed: seed,
            workers: rayon::current_num_threads(),
            versions,
            config_hash: config_hash(&config)?,
            config,
            wall_clock_seconds: None,
        })
    }

    pub fn with_version(mut self, name: &str, version: &str) -> Self {
        self.versions.insert(name.to_string(), version.to_string());
        self
    }

    /// Copy without the wall-clock time, for embedding in reports.
    pub fn timeless(&self) -> Self {
        RunManifest {
            wall_clock_seconds: None,
            ..self.clone()
        }
    }
}

/// Hex SHA-256 of the compact JSON encoding. `serde_json` maps keep keys
/// sorted, so equal configurations hash equally.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
