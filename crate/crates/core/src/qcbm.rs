//! Factorized quantum circuit Born machine over a 7-dimensional latent.
//!
//! Each latent dimension gets its own 8-qubit circuit whose 256 basis
//! states are the bins of an equal-probability Gaussian quantizer. The
//! circuits are trained independently by minimizing a multi-bandwidth MMD²
//! with parameter-shift gradients.

use crate::autodiff::{Adam, AdamConfig, AutodiffError, Checkpoint, ParamSet, Tensor};
use crate::qsim::{parameter_shift_jacobian, LayeredAnsatz, QsimError, Sampler};
use crate::seed::{stage_rng, Stage};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;
use thiserror::Error;

pub const N_BINS: usize = 256;
pub const DEFAULT_BANDWIDTHS: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcbmError {
    #[error("binner for dimension needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("latent dimension has zero variance; cannot fit a Gaussian binner")]
    ZeroVariance,
    #[error("non-finite value in binner input")]
    NonFiniteInput,
    #[error("bin {0} outside 0..{N_BINS}")]
    BinRange(usize),
    #[error("target distribution needs at least one value")]
    EmptyTarget,
    #[error("non-finite MMD² {loss} at iteration {iter}")]
    NonFiniteLoss { iter: usize, loss: f64 },
    #[error(transparent)]
    Circuit(#[from] QsimError),
    #[error(transparent)]
    Optimizer(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ⁻¹((b + 0.5) / 256)` for every bin, mirrored so `x_b = −x_{255−b}`.
pub fn standard_bin_values() -> &'static [f64; N_BINS] {
    static TABLE: OnceLock<[f64; N_BINS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let norm = standard_normal();
        let mut x = [0.0; N_BINS];
        for b in 0..N_BINS / 2 {
            x[b] = norm.inverse_cdf((b as f64 + 0.5) / N_BINS as f64);
            x[N_BINS - 1 - b] = -x[b];
        }
        x
    })
}

/// Equal-probability 256-bin quantizer for one approximately Gaussian dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBinner {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianBinner {
    /// Sample mean and unbiased standard deviation.
    pub fn fit(values: &[f64]) -> Result<Self, QcbmError> {
        if values.len() < 2 {
            return Err(QcbmError::TooFewValues(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QcbmError::NonFiniteInput);
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 || !var.is_finite() {
            return Err(QcbmError::ZeroVariance);
        }
        Ok(Self {
            mu,
            sigma: var.sqrt(),
        })
    }

    /// `clamp(floor(256 Φ((v − μ)/σ)), 0, 255)`.
    pub fn quantize(&self, v: f64) -> usize {
        let u = standard_normal().cdf((v - self.mu) / self.sigma);
        let b = (N_BINS as f64 * u).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(N_BINS - 1)
        }
    }

    /// `μ + σ Φ⁻¹((b + 0.5)/256)`.
    pub fn dequantize(&self, bin: usize) -> Result<f64, QcbmError> {
        if bin >= N_BINS {
            return Err(QcbmError::BinRange(bin));
        }
        Ok(self.mu + self.sigma * standard_bin_values()[bin])
    }

    /// All 256 representative values, strictly increasing.
    pub fn representatives(&self) -> Vec<f64> {
        standard_bin_values()
            .iter()
            .map(|x| self.mu + self.sigma * x)
            .collect()
    }

    /// Normalized histogram of quantized values.
    pub fn target_distribution(&self, values: &[f64]) -> Result<Vec<f64>, QcbmError> {
        if values.is_empty() {
            return Err(QcbmError::EmptyTarget);
        }
        let mut q = vec![0.0; N_BINS];
        for v in values {
            q[self.quantize(*v)] += 1.0;
        }
        let n = values.len() as f64;
        q.iter_mut().for_each(|c| *c /= n);
        Ok(q)
    }
}

/// Gram matrix of a sum of RBF kernels over standardized bin values.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdKernel {
    pub bandwidths: Vec<f64>,
    gram: Vec<f64>,
    n: usize,
}

impl MmdKernel {
    pub fn new(bandwidths: &[f64]) -> Self {
        Self::over_points(standard_bin_values(), bandwidths)
    }

    /// `K_bc = Σ_σ exp(−(x_b − x_c)² / 2σ²)`.
    pub fn over_points(x: &[f64], bandwidths: &[f64]) -> Self {
        let n = x.len();
        let mut gram = vec![0.0; n * n];
        for b in 0..n {
            for c in 0..n {
                let d2 = (x[b] - x[c]).powi(2);
                gram[b * n + c] = bandwidths.iter().map(|s| (-d2 / (2.0 * s * s)).exp()).sum();
            }
        }
        Self {
            bandwidths: bandwidths.to_vec(),
            gram,
            n,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn entry(&self, b: usize, c: usize) -> f64 {
        self.gram[b * self.n + c]
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.gram
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(k, x)| k * x).sum())
            .collect()
    }

    /// `(p − q)ᵀ K (p − q)`.
    pub fn mmd2(&self, p: &[f64], q: &[f64]) -> f64 {
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        let kd = self.apply(&d);
        d.iter().zip(&kd).map(|(a, b)| a * b).sum()
    }

    /// `∂ MMD² / ∂p = 2 K (p − q)`.
    pub fn mmd2_grad_p(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        self.apply(&d).into_iter().map(|v| 2.0 * v).collect()
    }
}

/// `∇_θ MMD² = 2 (p − q)ᵀ K J` with `J` from the parameter-shift rule.
pub fn mmd_gradient(
    ansatz: &LayeredAnsatz,
    angles: &[f64],
    q: &[f64],
    kernel: &MmdKernel,
) -> Result<(f64, Vec<f64>), QcbmError> {
    let p = ansatz.probabilities(angles)?;
    let jac = parameter_shift_jacobian(ansatz, angles)?;
    let grad = jac.vjp(&kernel.mmd2_grad_p(&p, q));
    Ok((kernel.mmd2(&p, q), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcbmConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub iters: usize,
    pub lr: f64,
    /// Angles start uniform in `[−init_range, init_range]`.
    pub init_range: f64,
    pub bandwidths: Vec<f64>,
}

impl Default for QcbmConfig {
    fn default() -> Self {
        Self {
            n_qubits: 8,
            n_layers: 7,
            iters: 100,
            lr: 0.1,
            init_range: 0.1,
            bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionFit {
    pub angles: Vec<f64>,
    /// MMD² before each of the `iters` updates.
    pub history: Vec<f64>,
    pub final_mmd2: f64,
}

/// Trains one circuit toward the target distribution `q`.
pub fn train_dimension(
    q: &[f64],
    kernel: &MmdKernel,
    config: &QcbmConfig,
    rng: &mut impl Rng,
) -> Result<DimensionFit, QcbmError> {
    let ansatz = LayeredAnsatz::new(config.n_qubits, config.n_layers)?;
    let r = config.init_range;
    let init: Vec<f64> = (0..ansatz.n_params())
        .map(|_| rng.random_range(-r..=r))
        .collect();
    let mut params = ParamSet::new();
    let id = params.add(
        "angles",
        Tensor::new(&[config.n_layers, config.n_qubits], init)?,
    );
    let mut opt = Adam::new(&params, AdamConfig::with_lr(config.lr));
    let mut history = Vec::with_capacity(config.iters);
    for iter in 0..config.iters {
        let (loss, grad) = mmd_gradient(&ansatz, params.get(id).data(), q, kernel)?;
        if !loss.is_finite() {
            return Err(QcbmError::NonFiniteLoss { iter, loss });
        }
        history.push(loss);
        let g = Tensor::new(params.get(id).shape(), grad)?;
        opt.step(&mut params, &[g])?;
    }
    let angles = params.get(id).data().to_vec();
    let final_mmd2 = kernel.mmd2(&ansatz.probabilities(&angles)?, q);
    if !final_mmd2.is_finite() {
        return Err(QcbmError::NonFiniteLoss {
            iter: config.iters,
            loss: final_mmd2,
        });
    }
    Ok(DimensionFit {
        angles,
        history,
        final_mmd2,
    })
}

/// Seven (or more generally `D`) independent circuits with their binners.
#[derive(Debug, Clone, PartialEq)]
pub struct QcbmModel {
    pub ansatz: LayeredAnsatz,
    pub angles: Vec<Vec<f64>>,
    pub binners: Vec<GaussianBinner>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcbmTraining {
    pub model: QcbmModel,
    pub histories: Vec<Vec<f64>>,
    pub final_mmd2: Vec<f64>,
}

/// Fits binners on each latent column and trains every dimension in parallel.
/// Dimension `d` draws its initial angles from stream `(Qcbm, d)`.
pub fn train_qcbm(
    columns: &[Vec<f64>],
    config: &QcbmConfig,
    seed: u64,
) -> Result<QcbmTraining, QcbmError> {
    let kernel = MmdKernel::new(&config.bandwidths);
    let ansatz = LayeredAnsatz::new(config.n_qubits, config.n_layers)?;
    let fits: Vec<(GaussianBinner, DimensionFit)> = columns
        .par_iter()
        .enumerate()
        .map(|(d, col)| {
            let binner = GaussianBinner::fit(col)?;
            let q = binner.target_distribution(col)?;
            let mut rng = stage_rng(seed, Stage::Qcbm, d as u32);
            Ok((binner, train_dimension(&q, &kernel, config, &mut rng)?))
        })
        .collect::<Result<_, QcbmError>>()?;
    let (binners, fits): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    Ok(QcbmTraining {
        histories: fits.iter().map(|f| f.history.clone()).collect(),
        final_mmd2: fits.iter().map(|f| f.final_mmd2).collect(),
        model: QcbmModel {
            ansatz,
            angles: fits.into_iter().map(|f| f.angles).collect(),
            binners,
        },
    })
}

impl QcbmModel {
    pub fn dims(&self) -> usize {
        self.angles.len()
    }

    pub fn distributions(&self) -> Result<Vec<Vec<f64>>, QcbmError> {
        self.angles
            .iter()
            .map(|a| Ok(self.ansatz.probabilities(a)?))
            .collect()
    }

    pub fn samplers(&self) -> Result<Vec<Sampler>, QcbmError> {
        self.distributions()?
            .iter()
            .map(|p| Ok(Sampler::new(p)?))
            .collect()
    }

    /// One latent vector; each dimension sampled independently and dequantized.
    pub fn sample_latent_vector(&self, samplers: &[Sampler], rng: &mut impl Rng) -> Vec<f64> {
        samplers
            .iter()
            .zip(&self.binners)
            .map(|(s, b)| b.dequantize(s.draw(rng)).expect("sampler over 256 bins"))
            .collect()
    }

    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>, QcbmError> {
        let samplers = self.samplers()?;
        Ok((0..count)
            .map(|_| self.sample_latent_vector(&samplers, rng))
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        let shape = [self.ansatz.n_layers, self.ansatz.n_qubits];
        for (d, (a, b)) in self.angles.iter().zip(&self.binners).enumerate() {
            c.push(
                format!("qcbm.dim{d}.angles"),
                Tensor::new(&shape, a.clone()).unwrap(),
            );
            c.push(
                format!("qcbm.dim{d}.binner"),
                Tensor::new(&[2], vec![b.mu, b.sigma]).unwrap(),
            );
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, QcbmError> {
        let mut angles = Vec::new();
        let mut binners = Vec::new();
        let mut shape = None;
        while let Some(a) = c.get(&format!("qcbm.dim{}.angles", angles.len())) {
            let b = c
                .get(&format!("qcbm.dim{}.binner", angles.len()))
                .filter(|b| b.len() == 2)
                .ok_or_else(|| {
                    QcbmError::Checkpoint(format!("missing binner for dimension {}", angles.len()))
                })?;
            match (shape, a.shape()) {
                (None, &[l, q]) => shape = Some((l, q)),
                (Some(s), &[l, q]) if s == (l, q) => {}
                (_, s) => return Err(QcbmError::Checkpoint(format!("angle block shape {s:?}"))),
            }
            angles.push(a.data().to_vec());
            binners.push(GaussianBinner {
                mu: b.data()[0],
                sigma: b.data()[1],
            });
        }
        let (layers, qubits) =
            shape.ok_or_else(|| QcbmError::Checkpoint("no QCBM circuits".into()))?;
        Ok(Self {
            ansatz: LayeredAnsatz::new(qubits, layers)?,
            angles,
            binners,
        })
    }
}
