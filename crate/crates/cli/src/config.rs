//! Policy defaults, optionally loaded from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use shutdownlens_core::ascomp::DEFAULT_EXEMPTION_THRESHOLD;
use shutdownlens_core::coverage::DEFAULT_WITHDRAWAL_THRESHOLD_PP;
use shutdownlens_core::passive::{DEFAULT_CARRYOVER_THRESHOLD, DEFAULT_INFLATION_RATIO, DEFAULT_ONSET_THRESHOLD};
use shutdownlens_core::prober::{DEFAULT_PORTS, DEFAULT_RETRIES, DEFAULT_TIMEOUT_MS};
use shutdownlens_core::registry::DEFAULT_STATUSES;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub ports: Vec<u16>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub rate_per_sec: f64,
    pub max_in_flight: usize,
    pub vantage_id: String,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            ports: DEFAULT_PORTS.to_vec(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            retries: DEFAULT_RETRIES,
            rate_per_sec: 100.0,
            max_in_flight: 64,
            vantage_id: "local".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub country: String,
    pub statuses: Vec<String>,
    pub withdrawal_threshold_pp: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            country: "IR".into(),
            statuses: DEFAULT_STATUSES.iter().map(|s| s.to_string()).collect(),
            withdrawal_threshold_pp: DEFAULT_WITHDRAWAL_THRESHOLD_PP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PassiveSettings {
    pub onset_threshold: f64,
    pub carryover_threshold: f64,
    pub inflation_ratio: f64,
}

impl Default for PassiveSettings {
    fn default() -> Self {
        PassiveSettings {
            onset_threshold: DEFAULT_ONSET_THRESHOLD,
            carryover_threshold: DEFAULT_CARRYOVER_THRESHOLD,
            inflation_ratio: DEFAULT_INFLATION_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscompConfig {
    pub exemption_threshold: f64,
}

impl Default for AscompConfig {
    fn default() -> Self {
        AscompConfig {
            exemption_threshold: DEFAULT_EXEMPTION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub probe: ProbeConfig,
    pub coverage: CoverageConfig,
    pub passive: PassiveSettings,
    pub ascomp: AscompConfig,
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    /// SHA-256 over the canonical JSON form of the effective settings.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
