//! Defaults file named by `ELANG_CONFIG`.
//!
//! A flat TOML table whose keys mirror the long flags with `_` for `-`:
//!
//! ```toml
//! score = "energy"
//! seed = 7
//! threshold = -inf
//! cost_super = 87e11
//! cost_swift_enc = 2.125e11
//! cost_swift_dec = 2.125e11
//! cost_head = 1e6
//!
//! [serve]
//! swift_url = "http://127.0.0.1:9001/infer"
//! super_url = "http://127.0.0.1:9002/infer"
//! listen = "127.0.0.1:8080"
//! timeout_ms = 2000
//! ```
//!
//! Flags given on the command line always win over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const ENV_VAR: &str = "ELANG_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub score: Option<String>,
    pub head: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub budget: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub bandwidth: Option<f64>,
    pub cost_super: Option<f64>,
    pub cost_swift_enc: Option<f64>,
    pub cost_swift_dec: Option<f64>,
    pub cost_head: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub swift_url: Option<String>,
    pub super_url: Option<String>,
    pub listen: Option<String>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The file named by `ELANG_CONFIG`, or empty defaults when unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(ENV_VAR) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}
