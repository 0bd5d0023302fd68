//! Platform configuration file.
//!
//! Relative paths resolve against the directory holding the config file. The
//! SHA-256 of the file bytes is recorded in every session's metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::perception::DetectorConfig;
use crate::sim::{Backend, SimRates};
use crate::twin::TwinMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    Missing(PathBuf),
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("invalid config {path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    /// Robot description JSON; the built-in body when absent.
    pub robot_description: Option<PathBuf>,
    /// Gesture library directory; the built-in library when absent.
    pub library: Option<PathBuf>,
    pub detectors: DetectorConfig,
    pub rates: SimRates,
    pub log_root: PathBuf,
    pub bind: String,
    pub port: u16,
    pub mode: Backend,
    pub twin_mode: TwinMode,
    /// Upper bound on joint-state frames forwarded to twin clients.
    pub twin_rate_hz: f64,
    /// Directory of static files served next to `/twin`.
    pub static_dir: Option<PathBuf>,
    /// Seeds every random choice, session ids included.
    pub seed: u64,
    pub deployment_id: String,
    pub robot_id: String,
    /// Raw audio/video capture. No stream in this build carries raw media;
    /// the flag exists so enabling it is an explicit act.
    pub raw_capture: bool,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            robot_description: None,
            library: None,
            detectors: DetectorConfig::default(),
            rates: SimRates::default(),
            log_root: PathBuf::from("logs"),
            bind: "127.0.0.1".into(),
            port: 8765,
            mode: Backend::Sim,
            twin_mode: TwinMode::SimControl,
            twin_rate_hz: 30.0,
            static_dir: None,
            seed: 0,
            deployment_id: "desk".into(),
            robot_id: "m-sim-0".into(),
            raw_capture: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: PlatformConfig,
    pub path: Option<PathBuf>,
    /// Lowercase hex SHA-256 of the file bytes; of the canonical JSON for
    /// an in-memory default.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl PlatformConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.detectors.validate()?;
        self.rates.validate().map_err(|e| e.to_string())?;
        if !(self.twin_rate_hz.is_finite() && self.twin_rate_hz > 0.0) {
            return Err(format!("twin_rate_hz {} must be > 0", self.twin_rate_hz));
        }
        if self.bind.trim().is_empty() {
            return Err("bind address is empty".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let c: PlatformConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ConfigError::Missing(path.to_owned()))
            }
            Err(e) => {
                return Err(ConfigError::Unreadable {
                    path: path.to_owned(),
                    reason: e.to_string(),
                })
            }
        };
        let invalid = |reason: String| ConfigError::Invalid {
            path: path.to_owned(),
            reason,
        };
        let text = std::str::from_utf8(&bytes).map_err(|e| invalid(e.to_string()))?;
        let mut config = Self::from_json(text).map_err(invalid)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.robot_description.as_mut().map(resolve);
        config.library.as_mut().map(resolve);
        config.static_dir.as_mut().map(resolve);
        resolve(&mut config.log_root);
        Ok(LoadedConfig {
            config,
            path: Some(path.to_owned()),
            hash: sha256_hex(&bytes),
        })
    }

    pub fn in_memory(self) -> LoadedConfig {
        let text = serde_json::to_string(&self).expect("config serializes");
        LoadedConfig {
            hash: sha256_hex(text.as_bytes()),
            config: self,
            path: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn missing_file_names_its_path() {
        let e = PlatformConfig::load(Path::new("/nonexistent/m.json")).unwrap_err();
        assert!(matches!(e, ConfigError::Missing(_)));
        assert!(e.to_string().contains("/nonexistent/m.json"));
    }

    #[test]
    fn bundled_default_loads_and_resolves_paths() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/config/default.json");
        let c = PlatformConfig::load(&path).unwrap();
        assert_eq!(c.hash.len(), 64);
        assert!(c.config.log_root.is_absolute());
        assert_eq!(c.config.mode, Backend::Sim);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(PlatformConfig::from_json(r#"{"twin_rate_hz": 0}"#).is_err());
        assert!(PlatformConfig::from_json(r#"{"port": "x"}"#).is_err());
        assert!(PlatformConfig::from_json(r#"{"colour": 1}"#).is_err());
        assert!(PlatformConfig::from_json(r#"{"detectors": {"presence": {"t_hi": 0.2, "t_lo": 0.5}}}"#).is_err());
    }
}
