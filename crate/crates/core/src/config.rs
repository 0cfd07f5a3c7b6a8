//! Loading of structured configuration files (TOML or JSON, chosen by
//! extension).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML in {path}: {message}")]
    Toml { path: PathBuf, message: String },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported config extension for {0} (expected .toml or .json)")]
    Extension(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

pub fn load_structured<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_structured(path, &raw)
}

pub fn parse_structured<T: DeserializeOwned>(path: &Path, raw: &str) -> Result<T, ConfigError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(raw).map_err(|e| ConfigError::Toml { path: path.to_path_buf(), message: e.to_string() }),
        Some("json") => serde_json::from_str(raw).map_err(|source| ConfigError::Json { path: path.to_path_buf(), source }),
        _ => Err(ConfigError::Extension(path.to_path_buf())),
    }
}
