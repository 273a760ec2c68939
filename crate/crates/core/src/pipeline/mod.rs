//! End-to-end study orchestration.
//!
//! Artifacts of one run live in `$LATENTFLOW_OUTPUT_ROOT/<run>/` (root defaults
//! to `runs`). Each stage reads the artifacts of earlier stages from that
//! directory and fails with a prerequisite error when one is missing.

mod config;
mod error;
mod io;
mod manifest;
mod stages;

pub use config::{ConfigError, PipelineConfig};
pub use error::PipelineError;
pub use io::{
    read_latents_csv, read_samples_csv, read_snapshots, write_latents_csv, write_samples_csv,
    write_snapshots, ArtifactError, SnapshotSet, SNAPSHOT_HEADER_BYTES, SNAPSHOT_MAGIC,
};
pub use manifest::{RunManifest, StageRecord};
pub use stages::{artifacts, Command, Pipeline};

use std::path::PathBuf;

pub const OUTPUT_ROOT_ENV: &str = "LATENTFLOW_OUTPUT_ROOT";

/// `$LATENTFLOW_OUTPUT_ROOT`, or `runs` when unset or empty.
pub fn output_root() -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}

/// Splits `--key=value` arguments into config overrides.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    args.iter()
        .map(|a| {
            let body = a.strip_prefix("--").unwrap_or(a);
            match body.split_once('=') {
                Some((k, v)) if !k.is_empty() => Ok((k.replace('-', "_"), v.to_string())),
                _ => Err(ConfigError::Override(a.clone())),
            }
        })
        .collect()
}
