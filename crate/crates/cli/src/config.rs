//! JSON configuration file. Flags win over the file, the file wins over
//! built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA: &str = "pindelay-config/1";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub graph: Option<PathBuf>,
    pub pins: Option<Vec<usize>>,
    pub pin_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub c: Option<f64>,
    pub tau_r: Option<f64>,
    pub tau_p: Option<f64>,
    pub s: Option<f64>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub segments: Option<usize>,
    pub samples: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Usage(format!(
                "config schema {:?} is not supported (expected {SCHEMA:?})",
                cfg.schema
            )));
        }
        for (name, v) in [("c", cfg.c), ("tau_r", cfg.tau_r), ("tau_p", cfg.tau_p)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CliError::Usage(format!("config {name} = {v} must be nonnegative")));
                }
            }
        }
        if let Some(f) = cfg.pin_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Usage(format!("config pin_fraction = {f} outside [0, 1]")));
            }
        }
        // a relative graph path is read from the config's own directory
        if let Some(g) = cfg.graph.take() {
            cfg.graph = Some(match path.parent() {
                Some(dir) if g.is_relative() => dir.join(g),
                _ => g,
            });
        }
        Ok(cfg)
    }
}
