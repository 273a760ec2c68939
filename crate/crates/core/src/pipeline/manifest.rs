use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

/// Provenance of a run directory. Stages are appended in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub workers: usize,
    pub config: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig, workers: usize) -> Self {
        RunManifest {
            config_hash: config.hash(),
            workers,
            config: PipelineConfig::KEYS
                .iter()
                .map(|k| (k.to_string(), config.get(k).expect("listed key")))
                .collect(),
            stages: Vec::new(),
        }
    }

    /// The stored manifest if it belongs to the same config and worker count, else a fresh one.
    pub fn load_or_new(path: &Path, config: &PipelineConfig, workers: usize) -> Self {
        let fresh = Self::new(config, workers);
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .filter(|m| m.config_hash == fresh.config_hash && m.workers == workers)
            .unwrap_or(fresh)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
