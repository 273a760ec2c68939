//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Values are scalars or
//! comma-separated lists. Command-line overrides use the same keys.

use std::fmt::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lbm::{BoundaryPolicy, CylinderChannel, LatticeConfig, SnapshotSchedule, SOUND_SPEED};
use crate::lstm::LstmConfig;
use crate::qcbm::{QcbmConfig, DEFAULT_BANDWIDTHS};
use crate::qgan::{QganConfig, DATA_QUBITS};
use crate::vqvae::VqVaeConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Malformed { line: usize, text: String },
    #[error("{}unknown key `{key}`", at(.line))]
    UnknownKey { key: String, line: Option<usize> },
    #[error("{}key `{key}`: cannot parse `{value}` as {expected}", at(.line))]
    Type {
        key: String,
        value: String,
        expected: &'static str,
        line: Option<usize>,
    },
    #[error("override `{0}` is not of the form --key=value")]
    Override(String),
    #[error("invalid configuration: {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
}

fn at(line: &Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub run: String,
    pub seed: u64,
    /// Thread count for data-parallel kernels; 0 uses every core.
    pub workers: usize,

    pub nx: usize,
    pub ny: usize,
    pub radius: f64,
    pub reynolds: f64,
    pub u_inlet: f64,
    pub channel_walls: bool,
    pub warmup: u64,
    pub interval: u64,
    pub snapshots: usize,

    pub vq_channels: [usize; 4],
    pub vq_hidden: usize,
    pub latent_dim: usize,
    pub codebook_size: usize,
    pub beta: f64,
    pub vq_epochs: usize,
    pub vq_batch: usize,
    pub vq_lr: f64,

    pub qcbm_qubits: usize,
    pub qcbm_layers: usize,
    pub qcbm_iterations: usize,
    pub qcbm_lr: f64,
    pub qcbm_init_range: f64,
    pub mmd_bandwidths: Vec<f64>,

    pub qgan_qubits: usize,
    pub qgan_layers: usize,
    pub qgan_hidden: [usize; 2],
    pub qgan_epochs: usize,
    pub qgan_batch: usize,
    pub qgan_lr: f64,
    pub qgan_init_range: f64,

    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub lstm_epochs: usize,
    pub lstm_batch: usize,
    pub lstm_lr: f64,

    /// Samples drawn per model; 0 matches the number of encoded snapshots.
    pub samples: usize,
    pub pca_components: usize,
    pub tsne: bool,
    pub perplexity: f64,
    pub tsne_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cyl = CylinderChannel::reference();
        let sched = SnapshotSchedule::reference();
        let vq = VqVaeConfig::default();
        let qcbm = QcbmConfig::default();
        let qgan = QganConfig::default();
        let lstm = LstmConfig::default();
        PipelineConfig {
            run: "reference".into(),
            seed: 2024,
            workers: 0,
            nx: cyl.nx,
            ny: cyl.ny,
            radius: cyl.radius,
            reynolds: cyl.reynolds,
            u_inlet: cyl.u_inlet,
            channel_walls: false,
            warmup: sched.warmup,
            interval: sched.interval,
            snapshots: sched.count,
            vq_channels: vq.channels,
            vq_hidden: vq.hidden,
            latent_dim: vq.latent_dim,
            codebook_size: vq.codebook_size,
            beta: vq.beta,
            vq_epochs: vq.epochs,
            vq_batch: vq.batch_size,
            vq_lr: vq.lr,
            qcbm_qubits: qcbm.n_qubits,
            qcbm_layers: qcbm.n_layers,
            qcbm_iterations: qcbm.iters,
            qcbm_lr: qcbm.lr,
            qcbm_init_range: qcbm.init_range,
            mmd_bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
            qgan_qubits: DATA_QUBITS + qgan.n_ancilla,
            qgan_layers: qgan.n_layers,
            qgan_hidden: qgan.hidden,
            qgan_epochs: qgan.epochs,
            qgan_batch: qgan.batch_size,
            qgan_lr: qgan.lr,
            qgan_init_range: qgan.init_range,
            lstm_layers: 1,
            lstm_hidden: lstm.hidden,
            lstm_epochs: lstm.epochs,
            lstm_batch: lstm.batch_size,
            lstm_lr: lstm.lr,
            samples: 0,
            pca_components: 2,
            tsne: true,
            perplexity: 100.0,
            tsne_iterations: 1000,
        }
    }
}

fn scalar<T: std::str::FromStr>(
    key: &str,
    v: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    v.trim().parse().map_err(|_| ConfigError::Type {
        key: key.into(),
        value: v.into(),
        expected,
        line: None,
    })
}

fn list<T: std::str::FromStr>(
    key: &str,
    v: &str,
    expected: &'static str,
) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|p| scalar(key, p, expected)).collect()
}

fn array<const N: usize>(key: &str, v: &str) -> Result<[usize; N], ConfigError> {
    let items: Vec<usize> = list(key, v, "a list of unsigned integers")?;
    items.try_into().map_err(|_| ConfigError::Type {
        key: key.into(),
        value: v.into(),
        expected: if N == 2 {
            "exactly 2 integers"
        } else {
            "exactly 4 integers"
        },
        line: None,
    })
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Type {
            key: key.into(),
            value: v.into(),
            expected: "a boolean",
            line: None,
        }),
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

const U: &str = "an unsigned integer";
const F: &str = "a number";

impl PipelineConfig {
    /// Every recognised key, in echo order.
    pub const KEYS: &'static [&'static str] = &[
        "run",
        "seed",
        "workers",
        "nx",
        "ny",
        "radius",
        "reynolds",
        "u_inlet",
        "channel_walls",
        "warmup",
        "interval",
        "snapshots",
        "vq_channels",
        "vq_hidden",
        "latent_dim",
        "codebook_size",
        "beta",
        "vq_epochs",
        "vq_batch",
        "vq_lr",
        "qcbm_qubits",
        "qcbm_layers",
        "qcbm_iterations",
        "qcbm_lr",
        "qcbm_init_range",
        "mmd_bandwidths",
        "qgan_qubits",
        "qgan_layers",
        "qgan_hidden",
        "qgan_epochs",
        "qgan_batch",
        "qgan_lr",
        "qgan_init_range",
        "lstm_layers",
        "lstm_hidden",
        "lstm_epochs",
        "lstm_batch",
        "lstm_lr",
        "samples",
        "pca_components",
        "tsne",
        "perplexity",
        "tsne_iterations",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let v = v.trim();
        match key {
            "run" => self.run = v.to_string(),
            "seed" => self.seed = scalar(key, v, U)?,
            "workers" => self.workers = scalar(key, v, U)?,
            "nx" => self.nx = scalar(key, v, U)?,
            "ny" => self.ny = scalar(key, v, U)?,
            "radius" => self.radius = scalar(key, v, F)?,
            "reynolds" => self.reynolds = scalar(key, v, F)?,
            "u_inlet" => self.u_inlet = scalar(key, v, F)?,
            "channel_walls" => self.channel_walls = boolean(key, v)?,
            "warmup" => self.warmup = scalar(key, v, U)?,
            "interval" => self.interval = scalar(key, v, U)?,
            "snapshots" => self.snapshots = scalar(key, v, U)?,
            "vq_channels" => self.vq_channels = array(key, v)?,
            "vq_hidden" => self.vq_hidden = scalar(key, v, U)?,
            "latent_dim" => self.latent_dim = scalar(key, v, U)?,
            "codebook_size" => self.codebook_size = scalar(key, v, U)?,
            "beta" => self.beta = scalar(key, v, F)?,
            "vq_epochs" => self.vq_epochs = scalar(key, v, U)?,
            "vq_batch" => self.vq_batch = scalar(key, v, U)?,
            "vq_lr" => self.vq_lr = scalar(key, v, F)?,
            "qcbm_qubits" => self.qcbm_qubits = scalar(key, v, U)?,
            "qcbm_layers" => self.qcbm_layers = scalar(key, v, U)?,
            "qcbm_iterations" => self.qcbm_iterations = scalar(key, v, U)?,
            "qcbm_lr" => self.qcbm_lr = scalar(key, v, F)?,
            "qcbm_init_range" => self.qcbm_init_range = scalar(key, v, F)?,
            "mmd_bandwidths" => self.mmd_bandwidths = list(key, v, "a list of numbers")?,
            "qgan_qubits" => self.qgan_qubits = scalar(key, v, U)?,
            "qgan_layers" => self.qgan_layers = scalar(key, v, U)?,
            "qgan_hidden" => self.qgan_hidden = array(key, v)?,
            "qgan_epochs" => self.qgan_epochs = scalar(key, v, U)?,
            "qgan_batch" => self.qgan_batch = scalar(key, v, U)?,
            "qgan_lr" => self.qgan_lr = scalar(key, v, F)?,
            "qgan_init_range" => self.qgan_init_range = scalar(key, v, F)?,
            "lstm_layers" => self.lstm_layers = scalar(key, v, U)?,
            "lstm_hidden" => self.lstm_hidden = scalar(key, v, U)?,
            "lstm_epochs" => self.lstm_epochs = scalar(key, v, U)?,
            "lstm_batch" => self.lstm_batch = scalar(key, v, U)?,
            "lstm_lr" => self.lstm_lr = scalar(key, v, F)?,
            "samples" => self.samples = scalar(key, v, U)?,
            "pca_components" => self.pca_components = scalar(key, v, U)?,
            "tsne" => self.tsne = boolean(key, v)?,
            "perplexity" => self.perplexity = scalar(key, v, F)?,
            "tsne_iterations" => self.tsne_iterations = scalar(key, v, U)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.into(),
                    line: None,
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "run" => self.run.clone(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "nx" => self.nx.to_string(),
            "ny" => self.ny.to_string(),
            "radius" => self.radius.to_string(),
            "reynolds" => self.reynolds.to_string(),
            "u_inlet" => self.u_inlet.to_string(),
            "channel_walls" => self.channel_walls.to_string(),
            "warmup" => self.warmup.to_string(),
            "interval" => self.interval.to_string(),
            "snapshots" => self.snapshots.to_string(),
            "vq_channels" => join(&self.vq_channels),
            "vq_hidden" => self.vq_hidden.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "codebook_size" => self.codebook_size.to_string(),
            "beta" => self.beta.to_string(),
            "vq_epochs" => self.vq_epochs.to_string(),
            "vq_batch" => self.vq_batch.to_string(),
            "vq_lr" => self.vq_lr.to_string(),
            "qcbm_qubits" => self.qcbm_qubits.to_string(),
            "qcbm_layers" => self.qcbm_layers.to_string(),
            "qcbm_iterations" => self.qcbm_iterations.to_string(),
            "qcbm_lr" => self.qcbm_lr.to_string(),
            "qcbm_init_range" => self.qcbm_init_range.to_string(),
            "mmd_bandwidths" => join(&self.mmd_bandwidths),
            "qgan_qubits" => self.qgan_qubits.to_string(),
            "qgan_layers" => self.qgan_layers.to_string(),
            "qgan_hidden" => join(&self.qgan_hidden),
            "qgan_epochs" => self.qgan_epochs.to_string(),
            "qgan_batch" => self.qgan_batch.to_string(),
            "qgan_lr" => self.qgan_lr.to_string(),
            "qgan_init_range" => self.qgan_init_range.to_string(),
            "lstm_layers" => self.lstm_layers.to_string(),
            "lstm_hidden" => self.lstm_hidden.to_string(),
            "lstm_epochs" => self.lstm_epochs.to_string(),
            "lstm_batch" => self.lstm_batch.to_string(),
            "lstm_lr" => self.lstm_lr.to_string(),
            "samples" => self.samples.to_string(),
            "pca_components" => self.pca_components.to_string(),
            "tsne" => self.tsne.to_string(),
            "perplexity" => self.perplexity.to_string(),
            "tsne_iterations" => self.tsne_iterations.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed {
                    line,
                    text: raw.trim().to_string(),
                })?;
            let k = k.trim();
            if k.is_empty() || v.trim().is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    text: raw.trim().to_string(),
                });
            }
            self.set(k, v).map_err(|e| with_line(e, line))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path` (if any), applies `overrides` in order, then validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                reason: e.to_string(),
            })?;
            c.apply_text(&text)?;
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn cylinder(&self) -> CylinderChannel {
        CylinderChannel {
            nx: self.nx,
            ny: self.ny,
            radius: self.radius,
            reynolds: self.reynolds,
            u_inlet: self.u_inlet,
            center: None,
        }
    }

    /// BGK relaxation time derived from the flow parameters.
    pub fn tau(&self) -> f64 {
        self.cylinder().tau()
    }

    pub fn lattice(&self) -> Result<LatticeConfig, ConfigError> {
        let boundary = if self.channel_walls {
            BoundaryPolicy::WALLED_CHANNEL
        } else {
            BoundaryPolicy::WAKE
        };
        LatticeConfig::cylinder_channel(self.cylinder())
            .map(|c| c.with_boundary(boundary))
            .map_err(|e| invalid("reynolds", e.to_string()))
    }

    pub fn schedule(&self) -> SnapshotSchedule {
        SnapshotSchedule {
            warmup: self.warmup,
            interval: self.interval,
            count: self.snapshots,
        }
    }

    pub fn vqvae(&self) -> VqVaeConfig {
        VqVaeConfig {
            height: self.ny,
            width: self.nx,
            channels: self.vq_channels,
            hidden: self.vq_hidden,
            latent_dim: self.latent_dim,
            codebook_size: self.codebook_size,
            beta: self.beta,
            epochs: self.vq_epochs,
            batch_size: self.vq_batch,
            lr: self.vq_lr,
            ..VqVaeConfig::default()
        }
    }

    pub fn qcbm(&self) -> QcbmConfig {
        QcbmConfig {
            n_qubits: self.qcbm_qubits,
            n_layers: self.qcbm_layers,
            iters: self.qcbm_iterations,
            lr: self.qcbm_lr,
            init_range: self.qcbm_init_range,
            bandwidths: self.mmd_bandwidths.clone(),
        }
    }

    pub fn qgan(&self) -> QganConfig {
        QganConfig {
            n_ancilla: self.qgan_qubits.saturating_sub(DATA_QUBITS),
            n_layers: self.qgan_layers,
            hidden: self.qgan_hidden,
            epochs: self.qgan_epochs,
            batch_size: self.qgan_batch,
            lr: self.qgan_lr,
            init_range: self.qgan_init_range,
        }
    }

    pub fn lstm(&self) -> LstmConfig {
        LstmConfig {
            hidden: self.lstm_hidden,
            epochs: self.lstm_epochs,
            batch_size: self.lstm_batch,
            lr: self.lstm_lr,
            ..LstmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.is_empty() || self.run.contains(['/', '\\']) || self.run.starts_with('.') {
            return Err(invalid("run", "must be a plain directory name".into()));
        }
        if !(self.reynolds > 0.0) || !self.reynolds.is_finite() {
            return Err(invalid(
                "reynolds",
                format!("{} must be positive", self.reynolds),
            ));
        }
        if !(self.radius > 0.0) {
            return Err(invalid(
                "radius",
                format!("{} must be positive", self.radius),
            ));
        }
        let tau = self.tau();
        if !(tau > 0.5) || !tau.is_finite() {
            return Err(invalid(
                "reynolds",
                format!("derived tau = {tau} must exceed 0.5"),
            ));
        }
        self.lattice()?;
        if self.interval == 0 || self.snapshots == 0 {
            return Err(invalid(
                "snapshots",
                "snapshot count and interval must be positive".into(),
            ));
        }
        self.vqvae()
            .validate()
            .map_err(|e| invalid("vq_*", e.to_string()))?;
        if self.qcbm_qubits != DATA_QUBITS {
            return Err(invalid(
                "qcbm_qubits",
                format!("must be {DATA_QUBITS} (256 bins per dimension)"),
            ));
        }
        if self.qgan_qubits < DATA_QUBITS {
            return Err(invalid(
                "qgan_qubits",
                format!("must be at least {DATA_QUBITS} data qubits"),
            ));
        }
        if self.lstm_layers != 1 {
            return Err(invalid(
                "lstm_layers",
                "only a single LSTM layer is supported".into(),
            ));
        }
        let positive = [
            ("qcbm_layers", self.qcbm_layers),
            ("qgan_layers", self.qgan_layers),
            ("qgan_batch", self.qgan_batch),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_batch", self.lstm_batch),
            ("pca_components", self.pca_components),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(invalid(k, "must be positive".into()));
            }
        }
        let rates = [
            ("qcbm_lr", self.qcbm_lr),
            ("qgan_lr", self.qgan_lr),
            ("lstm_lr", self.lstm_lr),
            ("perplexity", self.perplexity),
        ];
        for (k, v) in rates {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(k, format!("{v} must be positive")));
            }
        }
        if self.mmd_bandwidths.is_empty() || self.mmd_bandwidths.iter().any(|b| !(*b > 0.0)) {
            return Err(invalid(
                "mmd_bandwidths",
                "need at least one positive bandwidth".into(),
            ));
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` lines, in `KEYS` order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    /// SHA-256 of `to_text`, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The inlet speed used when none is configured: Mach 0.1.
    pub fn default_inlet() -> f64 {
        0.1 * SOUND_SPEED
    }
}

fn invalid(key: &str, reason: String) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason,
    }
}

fn with_line(e: ConfigError, l: usize) -> ConfigError {
    match e {
        ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { key, line: Some(l) },
        ConfigError::Type {
            key,
            value,
            expected,
            ..
        } => ConfigError::Type {
            key,
            value,
            expected,
            line: Some(l),
        },
        other => other,
    }
}
