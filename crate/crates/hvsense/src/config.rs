//! Scenario files.

use std::fs;
use std::path::Path;

use hvsense_core::channel::ScenarioConfig;
use sha2::{Digest, Sha256};

use crate::BenchError;

/// Parses a JSON scenario; missing keys take their defaults, unknown keys
/// are rejected.
pub fn parse_config(json: &str) -> Result<ScenarioConfig, BenchError> {
    let cfg: ScenarioConfig = serde_json::from_str(json).map_err(|e| BenchError::Config(e.to_string()))?;
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("scenario serializes");
    Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
}
