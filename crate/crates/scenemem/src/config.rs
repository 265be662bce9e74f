//! Run configuration, read from TOML.
//!
//! ```toml
//! success_radius = 0.25
//!
//! [memory]
//! static_iou = 0.2
//! static_window = 10
//!
//! [provider]
//! kind = "endpoint"
//! endpoint = "127.0.0.1:7070"
//! ```
//!
//! Every key is optional; missing ones take their defaults.

use std::path::Path;

use scenemem_core::MemoryConfig;
use serde::{Deserialize, Serialize};

use crate::episode::EpisodeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// Answers from the `world.json` of a synthetic episode.
    #[default]
    BuiltinSynthetic,
    /// Remote responder speaking the line-JSON protocol.
    Endpoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Locate succeeds when the predicted center is closer than this, meters.
    pub success_radius: f64,
    pub memory: MemoryConfig,
    pub provider: ProviderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { success_radius: 0.25, memory: MemoryConfig::default(), provider: ProviderConfig::default() }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.memory.validate().map_err(|field| format!("memory.{field} is out of range"))?;
        if !(self.success_radius.is_finite() && self.success_radius > 0.0) {
            return Err("success_radius must be positive".into());
        }
        if self.provider.kind == ProviderKind::Endpoint && self.provider.endpoint.is_none() {
            return Err("provider.endpoint is required for the endpoint provider".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EpisodeError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => EpisodeError::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_toml(&text).map_err(|msg| EpisodeError::Parse { path: path.to_path_buf(), line: 0, msg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_files() {
        let d = RunConfig::default();
        assert_eq!(d.memory.static_iou, 0.2);
        assert_eq!((d.memory.k_objects, d.memory.k_frames, d.memory.k_places), (10, 5, 3));
        let cfg = RunConfig::from_toml("success_radius = 0.5\n[memory]\nstatic_window = 4\n").unwrap();
        assert_eq!(cfg.success_radius, 0.5);
        assert_eq!(cfg.memory.static_window, 4);
        assert_eq!(cfg.memory.dynamic_window, 2);
        assert!(RunConfig::from_toml("[memory]\nstatic_iou = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[provider]\nkind = \"endpoint\"\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }
}
