//! Hybrid adversarial model: seven 10-qubit generators and a classical
//! discriminator over stacked 256-bin distributions.
//!
//! Data qubits are `0..8` and ancillas `8..10`, so basis index
//! `a · 256 + d` carries data bin `d` and ancilla pattern `a`.

use crate::autodiff::init::xavier_uniform;
use crate::autodiff::{
    Adam, AdamConfig, AutodiffError, Checkpoint, Graph, ParamId, ParamSet, Tensor, Var,
};
use crate::qcbm::{GaussianBinner, QcbmError, N_BINS};
use crate::qsim::{parameter_shift, LayeredAnsatz, QsimError, Sampler, StateVector};
use crate::seed::{stage_rng, Stage};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

pub const DATA_QUBITS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QganError {
    #[error("noise value {0} outside 0..{N_BINS}")]
    NoiseRange(usize),
    #[error("latent table is empty")]
    EmptyData,
    #[error("discriminator input has {got} values, expected {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite loss at batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error(transparent)]
    Circuit(#[from] QsimError),
    #[error(transparent)]
    Binner(#[from] QcbmError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QganConfig {
    pub n_ancilla: usize,
    pub n_layers: usize,
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub init_range: f64,
}

impl Default for QganConfig {
    fn default() -> Self {
        Self {
            n_ancilla: 2,
            n_layers: 6,
            hidden: [512, 128],
            epochs: 2,
            batch_size: 32,
            lr: 0.01,
            init_range: 0.1,
        }
    }
}

/// Basis-state preparation of `b` on the data qubits: `Ry(π)` where bit `i` is set.
pub fn encode_noise(state: &mut StateVector, b: usize) -> Result<(), QganError> {
    if b >= N_BINS {
        return Err(QganError::NoiseRange(b));
    }
    for q in 0..DATA_QUBITS {
        if b & (1 << q) != 0 {
            state.apply_ry(q, PI)?;
        }
    }
    Ok(())
}

/// Sums out the ancilla qubits of a full probability vector.
pub fn marginalize_data(full: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; N_BINS];
    for chunk in full.chunks(N_BINS) {
        for (acc, v) in p.iter_mut().zip(chunk) {
            *acc += v;
        }
    }
    p
}

/// Data-bin distribution of one generator for noise value `b`.
pub fn generator_distribution(
    ansatz: &LayeredAnsatz,
    angles: &[f64],
    b: usize,
) -> Result<Vec<f64>, QganError> {
    if b >= N_BINS {
        return Err(QganError::NoiseRange(b));
    }
    Ok(data_distribution(ansatz, angles, b)?)
}

fn data_distribution(
    ansatz: &LayeredAnsatz,
    angles: &[f64],
    b: usize,
) -> Result<Vec<f64>, QsimError> {
    let mut s = StateVector::zero(ansatz.n_qubits)?;
    for q in (0..DATA_QUBITS).filter(|q| b & (1 << q) != 0) {
        s.apply_ry(q, PI)?;
    }
    ansatz.apply(&mut s, angles)?;
    Ok(marginalize_data(&s.probabilities()))
}

/// Stacked per-dimension histograms of a batch of latent rows, `D × 256` flattened.
pub fn real_batch_distribution(
    rows: &[&[f64]],
    binners: &[GaussianBinner],
) -> Result<Vec<f64>, QganError> {
    if rows.is_empty() {
        return Err(QganError::EmptyData);
    }
    let mut out = vec![0.0; binners.len() * N_BINS];
    let w = 1.0 / rows.len() as f64;
    for r in rows {
        for (d, b) in binners.iter().enumerate() {
            out[d * N_BINS + b.quantize(r[d])] += w;
        }
    }
    Ok(out)
}

/// Feedforward classifier `D·256 → h0 → h1 → 1` with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub params: ParamSet,
    layers: [(ParamId, ParamId); 3],
    input: usize,
}

impl Discriminator {
    pub fn new(input: usize, hidden: [usize; 2], rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let widths = [input, hidden[0], hidden[1], 1];
        let layers = std::array::from_fn(|l| {
            let (fin, fout) = (widths[l], widths[l + 1]);
            (
                ps.add(
                    format!("disc.fc{l}.weight"),
                    xavier_uniform(&[fout, fin], fin, fout, rng),
                ),
                ps.add(format!("disc.fc{l}.bias"), Tensor::zeros(&[fout])),
            )
        });
        Self {
            params: ps,
            layers,
            input,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    /// Records the forward pass on `g` and returns the probability node `[N, 1]`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (g.param(*w), g.param(*b));
            h = g.linear(h, w, Some(b))?;
            h = if l < 2 { g.relu(h) } else { g.sigmoid(h) };
        }
        Ok(h)
    }

    fn check(&self, x: &[f64]) -> Result<(), QganError> {
        if x.len() == self.input {
            Ok(())
        } else {
            Err(QganError::InputShape {
                expected: self.input,
                got: x.len(),
            })
        }
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64, QganError> {
        self.check(x)?;
        let mut g = Graph::new(&self.params);
        let xv = g.input(Tensor::new(&[1, self.input], x.to_vec())?);
        let p = self.forward(&mut g, xv)?;
        Ok(g.value(p).item())
    }

    /// `−log D(x)` and its gradient with respect to `x`.
    pub fn generator_loss_and_input_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), QganError> {
        self.check(x)?;
        let mut g = Graph::new(&self.params);
        let xv = g.tracked_input(Tensor::new(&[1, self.input], x.to_vec())?);
        let p = self.forward(&mut g, xv)?;
        let one = g.input(Tensor::full(&[1, 1], 1.0));
        let loss = g.bce(p, one)?;
        let grads = g.backward(loss)?;
        let gx = grads
            .wrt(xv)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; self.input]);
        Ok((g.value(loss).item(), gx))
    }

    /// BCE of real→1 and fake→0 plus the parameter gradients.
    fn discriminator_step_grads(
        &self,
        real: &[f64],
        fake: &[f64],
    ) -> Result<(f64, f64, f64, Vec<Tensor>), QganError> {
        let mut g = Graph::new(&self.params);
        let mut both = real.to_vec();
        both.extend_from_slice(fake);
        let x = g.input(Tensor::new(&[2, self.input], both)?);
        let p = self.forward(&mut g, x)?;
        let t = g.input(Tensor::new(&[2, 1], vec![1.0, 0.0])?);
        // summed over the pair
        let mean = g.bce(p, t)?;
        let loss = g.scale(mean, 2.0);
        let pv = g.value(p).data().to_vec();
        let grads = g.backward(loss)?.param_grads(&self.params);
        Ok((g.value(loss).item(), pv[0], pv[1], grads))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversarialBatchReport {
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QganModel {
    pub ansatz: LayeredAnsatz,
    pub angles: Vec<Vec<f64>>,
    pub binners: Vec<GaussianBinner>,
    pub discriminator: Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QganTraining {
    pub model: QganModel,
    pub reports: Vec<AdversarialBatchReport>,
}

impl QganModel {
    pub fn new(
        config: &QganConfig,
        binners: Vec<GaussianBinner>,
        rng: &mut impl Rng,
    ) -> Result<Self, QganError> {
        let ansatz = LayeredAnsatz::new(DATA_QUBITS + config.n_ancilla, config.n_layers)?;
        let r = config.init_range;
        let angles = (0..binners.len())
            .map(|_| {
                (0..ansatz.n_params())
                    .map(|_| rng.random_range(-r..=r))
                    .collect()
            })
            .collect();
        let discriminator = Discriminator::new(binners.len() * N_BINS, config.hidden, rng);
        Ok(Self {
            ansatz,
            angles,
            binners,
            discriminator,
        })
    }

    pub fn dims(&self) -> usize {
        self.angles.len()
    }

    /// Stacked generator distributions for one noise value per dimension.
    pub fn fake_distribution(&self, noise: &[usize]) -> Result<Vec<f64>, QganError> {
        let parts: Vec<Vec<f64>> = self
            .angles
            .par_iter()
            .zip(noise)
            .map(|(a, &b)| generator_distribution(&self.ansatz, a, b))
            .collect::<Result<_, _>>()?;
        Ok(parts.concat())
    }

    /// `∇_θ` of `−log D(G(θ))` for every generator, through the discriminator's
    /// input gradient and each generator's parameter-shift Jacobian.
    pub fn generator_gradients(&self, noise: &[usize]) -> Result<(f64, Vec<Vec<f64>>), QganError> {
        let fake = self.fake_distribution(noise)?;
        if let Some(&b) = noise.iter().find(|b| **b >= N_BINS) {
            return Err(QganError::NoiseRange(b));
        }
        let (loss, gx) = self.discriminator.generator_loss_and_input_grad(&fake)?;
        let grads = self
            .angles
            .par_iter()
            .zip(noise)
            .enumerate()
            .map(|(d, (a, &b))| {
                let jac = parameter_shift(a, |t| data_distribution(&self.ansatz, t, b))?;
                Ok(jac.vjp(&gx[d * N_BINS..(d + 1) * N_BINS]))
            })
            .collect::<Result<_, QganError>>()?;
        Ok((loss, grads))
    }

    /// Cached per-noise samplers for generation.
    pub fn sampler(&self) -> Result<QganSampler<'_>, QganError> {
        let tables = self
            .angles
            .par_iter()
            .map(|a| {
                (0..N_BINS)
                    .map(|b| Ok(Sampler::new(&generator_distribution(&self.ansatz, a, b)?)?))
                    .collect::<Result<Vec<_>, QganError>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(QganSampler {
            model: self,
            tables,
        })
    }

    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>, QganError> {
        let s = self.sampler()?;
        Ok((0..count).map(|_| s.sample_latent_vector(rng)).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_params(&self.discriminator.params);
        let shape = [self.ansatz.n_layers, self.ansatz.n_qubits];
        for (d, (a, b)) in self.angles.iter().zip(&self.binners).enumerate() {
            c.push(
                format!("qgan.dim{d}.angles"),
                Tensor::new(&shape, a.clone()).unwrap(),
            );
            c.push(
                format!("qgan.dim{d}.binner"),
                Tensor::new(&[2], vec![b.mu, b.sigma]).unwrap(),
            );
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, QganError> {
        let mut angles = Vec::new();
        let mut binners = Vec::new();
        let mut shape = None;
        while let Some(a) = c.get(&format!("qgan.dim{}.angles", angles.len())) {
            let d = angles.len();
            let b = c
                .get(&format!("qgan.dim{d}.binner"))
                .filter(|b| b.len() == 2)
                .ok_or_else(|| {
                    QganError::Checkpoint(format!("missing binner for dimension {d}"))
                })?;
            match (shape, a.shape()) {
                (None, &[l, q]) => shape = Some((l, q)),
                (Some(s), &[l, q]) if s == (l, q) => {}
                (_, s) => return Err(QganError::Checkpoint(format!("angle block shape {s:?}"))),
            }
            angles.push(a.data().to_vec());
            binners.push(GaussianBinner {
                mu: b.data()[0],
                sigma: b.data()[1],
            });
        }
        let (layers, qubits) =
            shape.ok_or_else(|| QganError::Checkpoint("no generator circuits".into()))?;
        let w0 = c
            .get("disc.fc0.weight")
            .ok_or_else(|| QganError::Checkpoint("missing discriminator".into()))?;
        let w1 = c
            .get("disc.fc1.weight")
            .ok_or_else(|| QganError::Checkpoint("missing discriminator".into()))?;
        let (h0, input) = (w0.shape()[0], w0.shape()[1]);
        let h1 = w1.shape()[0];
        let mut discriminator =
            Discriminator::new(input, [h0, h1], &mut stage_rng(0, Stage::Qgan, 0));
        c.load_into(&mut discriminator.params)?;
        Ok(Self {
            ansatz: LayeredAnsatz::new(qubits, layers)?,
            angles,
            binners,
            discriminator,
        })
    }
}

pub struct QganSampler<'m> {
    model: &'m QganModel,
    tables: Vec<Vec<Sampler>>,
}

impl QganSampler<'_> {
    /// Per dimension: uniform noise bin, generator distribution, one draw, dequantize.
    pub fn sample_latent_vector(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.tables
            .iter()
            .zip(&self.model.binners)
            .map(|(t, binner)| {
                let b = rng.random_range(0..N_BINS);
                binner.dequantize(t[b].draw(rng)).expect("bin in range")
            })
            .collect()
    }
}

/// Alternating discriminator and generator updates over shuffled batches.
/// Randomness draws from stream `(Qgan, 0)`.
pub fn train_qgan(
    rows: &[Vec<f64>],
    config: &QganConfig,
    seed: u64,
) -> Result<QganTraining, QganError> {
    if rows.is_empty() {
        return Err(QganError::EmptyData);
    }
    let dims = rows[0].len();
    let binners = (0..dims)
        .map(|d| GaussianBinner::fit(&rows.iter().map(|r| r[d]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = stage_rng(seed, Stage::Qgan, 0);
    let mut model = QganModel::new(config, binners, &mut rng)?;
    let mut gen_params = ParamSet::new();
    for (d, a) in model.angles.iter().enumerate() {
        gen_params.add(format!("gen{d}"), Tensor::new(&[a.len()], a.clone())?);
    }
    let mut g_opt = Adam::new(&gen_params, AdamConfig::with_lr(config.lr));
    let mut d_opt = Adam::new(&model.discriminator.params, AdamConfig::with_lr(config.lr));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut reports = Vec::new();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = reports.len();
            let real_rows: Vec<&[f64]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
            let real = real_batch_distribution(&real_rows, &model.binners)?;
            let noise: Vec<usize> = (0..dims).map(|_| rng.random_range(0..N_BINS)).collect();
            let fake = model.fake_distribution(&noise)?;
            let (d_loss, d_real, d_fake, d_grads) =
                model.discriminator.discriminator_step_grads(&real, &fake)?;
            if !d_loss.is_finite() {
                return Err(QganError::NonFiniteLoss { batch });
            }
            d_opt
                .step(&mut model.discriminator.params, &d_grads)
                .map_err(|_| QganError::NonFiniteLoss { batch })?;
            let (g_loss, g_grads) = model.generator_gradients(&noise)?;
            if !g_loss.is_finite() {
                return Err(QganError::NonFiniteLoss { batch });
            }
            let g_grads: Vec<Tensor> = g_grads
                .into_iter()
                .map(|g| Tensor::new(&[g.len()], g))
                .collect::<Result<_, _>>()?;
            g_opt
                .step(&mut gen_params, &g_grads)
                .map_err(|_| QganError::NonFiniteLoss { batch })?;
            for (a, t) in model.angles.iter_mut().zip(gen_params.values()) {
                a.copy_from_slice(t.data());
            }
            reports.push(AdversarialBatchReport {
                d_loss,
                g_loss,
                d_real_mean: d_real,
                d_fake_mean: d_fake,
            });
        }
    }
    Ok(QganTraining { model, reports })
}
