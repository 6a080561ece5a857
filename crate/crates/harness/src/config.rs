//! Plain-text (TOML) experiment configs.
//!
//! Every key is optional; missing keys take their defaults and unknown keys
//! are rejected. See the README for the full key list.

use sha2::{Digest, Sha256};
use tsc_core::config::ExperimentConfig;

use crate::error::{HarnessError, Result};

/// Parses and validates a config; an empty document yields all defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text)
        .map_err(|e| HarnessError::Config(e.to_string().trim_end().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Full config with every default spelled out.
pub fn config_to_text(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("config serialises to TOML")
}

/// SHA-256 of the canonical text of every field that affects results.
///
/// `output_dir` only says where files land, so it is excluded.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = ExperimentConfig {
        output_dir: String::new(),
        ..config.clone()
    };
    hex::encode(Sha256::digest(config_to_text(&canonical).as_bytes()))
}
