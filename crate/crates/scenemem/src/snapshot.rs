//! Canonical memory snapshots.
//!
//! A snapshot is pretty-printed JSON. Struct fields serialize in declaration
//! order, objects as a list in ascending id, relations and maps in key order,
//! history in timestamp order, and floats in shortest round-trip form, so
//! equal memories produce equal bytes.

use std::fs;
use std::path::Path;

use scenemem_core::{MemoryConfig, SceneMemory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::EpisodeError;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySnapshot {
    pub schema_version: u32,
    /// Hex SHA-256 of the compact JSON of `config`.
    pub config_hash: String,
    pub config: MemoryConfig,
    /// Digest of the episode the memory was built from, if any.
    #[serde(default)]
    pub episode_digest: Option<String>,
    pub memory: SceneMemory,
}

pub fn config_hash(cfg: &MemoryConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

impl MemorySnapshot {
    pub fn new(memory: SceneMemory, config: MemoryConfig, episode_digest: Option<String>) -> Self {
        MemorySnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            config_hash: config_hash(&config),
            config,
            episode_digest,
            memory,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("snapshot serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EpisodeError> {
        let raw: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| EpisodeError::Parse {
            path: "<snapshot>".into(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SNAPSHOT_SCHEMA_VERSION {
            return Err(EpisodeError::SchemaMismatch { found });
        }
        let snap: MemorySnapshot = serde_json::from_value(raw).map_err(|e| EpisodeError::Parse {
            path: "<snapshot>".into(),
            line: 0,
            msg: e.to_string(),
        })?;
        if snap.config_hash != config_hash(&snap.config) {
            return Err(EpisodeError::Invalid("config_hash does not match the stored config".into()));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), EpisodeError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EpisodeError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(EpisodeError::MissingFile(path.to_path_buf())),
            Err(e) => return Err(e.into()),
        };
        Self::from_bytes(&bytes).map_err(|e| match e {
            EpisodeError::Parse { line, msg, .. } => EpisodeError::Parse { path: path.to_path_buf(), line, msg },
            other => other,
        })
    }
}
