use std::path::{Path, PathBuf};

use eventsift_core::session::SessionConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid config {0}: {1}")]
    Parse(PathBuf, toml::de::Error),
    #[error("{0} is not a valid port: {1}")]
    Port(String, std::num::ParseIntError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    /// Relative manifest paths in requests resolve against this directory.
    pub data_root: PathBuf,
    /// When set, every session is written here after each change.
    pub session_dir: Option<PathBuf>,
    /// Defaults for sessions created without an explicit config.
    pub session: SessionConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_root: PathBuf::from("."),
            session_dir: None,
            session: SessionConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.into(), e))
    }

    /// Applies `EVENTSIFT_PORT` and `EVENTSIFT_DATA_ROOT` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(port) = lookup("EVENTSIFT_PORT") {
            self.port = port.parse().map_err(|e| ConfigError::Port(port.clone(), e))?;
        }
        if let Some(root) = lookup("EVENTSIFT_DATA_ROOT") {
            self.data_root = PathBuf::from(root);
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.data_root.join(path)
        }
    }
}
