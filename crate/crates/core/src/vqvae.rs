//! Vector-quantized autoencoder from vorticity images to a 7-dimensional latent.
//!
//! Images are `[1, ny, nx]` tensors (row `y`, column `x`). Four strided
//! conv blocks shrink both axes by 16, an MLP maps the flattened feature
//! map to the latent, and the decoder mirrors the path with transposed
//! convolutions. The quantizer snaps each latent to its nearest codeword;
//! gradients pass it straight through.

use crate::autodiff::init::{kaiming_uniform, uniform, xavier_uniform};
use crate::autodiff::{
    Adam, AdamConfig, AutodiffError, BatchStats, Checkpoint, Graph, ParamId, ParamSet, Tensor, Var,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

const BN_EPS: f64 = 1e-5;
const ENCODE_CHUNK: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VqVaeError {
    #[error("invalid VQ-VAE configuration: {0}")]
    Config(String),
    #[error("input shape mismatch: expected {expected} values per image, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqVaeConfig {
    /// Image height (`ny`).
    pub height: usize,
    /// Image width (`nx`).
    pub width: usize,
    /// Output channels of the four encoder blocks.
    pub channels: [usize; 4],
    pub hidden: usize,
    pub latent_dim: usize,
    pub codebook_size: usize,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub bn_momentum: f64,
}

impl Default for VqVaeConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 256,
            channels: [32, 64, 128, 256],
            hidden: 2048,
            latent_dim: 7,
            codebook_size: 128,
            beta: 0.2,
            epochs: 50,
            batch_size: 32,
            lr: 5e-4,
            bn_momentum: 0.1,
        }
    }
}

impl VqVaeConfig {
    pub fn validate(&self) -> Result<(), VqVaeError> {
        let bad = |m: String| Err(VqVaeError::Config(m));
        if self.height % 16 != 0 || self.width % 16 != 0 || self.height == 0 || self.width == 0 {
            return bad(format!(
                "image {}x{} must have both sides divisible by 16",
                self.height, self.width
            ));
        }
        if self.channels.contains(&0)
            || self.hidden == 0
            || self.latent_dim == 0
            || self.codebook_size == 0
        {
            return bad("channel, hidden, latent and codebook sizes must be positive".into());
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return bad("batch size and learning rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad(format!(
                "batchnorm momentum {} outside [0, 1]",
                self.bn_momentum
            ));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// `(channels, height, width)` of the deepest feature map.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        (self.channels[3], self.height / 16, self.width / 16)
    }

    pub fn feature_len(&self) -> usize {
        let (c, h, w) = self.feature_shape();
        c * h * w
    }
}

/// Index of the nearest codeword by squared distance; ties go to the lowest index.
pub fn quantize(z: &[f64], codebook: &Tensor) -> (usize, f64) {
    let d = codebook.shape()[1];
    let mut best = (0, f64::INFINITY);
    for (k, row) in codebook.data().chunks(d).enumerate() {
        let dist: f64 = row.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best
}

/// The three terms of the VQ objective as squared Euclidean norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqLossTerms {
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub beta: f64,
}

impl VqLossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook + self.beta * self.commitment
    }
}

/// `‖x − x̂‖²`, `‖sg[z_e] − e‖²`, `‖z_e − sg[e]‖²`.
pub fn vqvae_loss(x: &[f64], x_hat: &[f64], z_e: &[f64], e: &[f64], beta: f64) -> VqLossTerms {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let latent = sq(z_e, e);
    VqLossTerms {
        reconstruction: sq(x, x_hat),
        codebook: latent,
        commitment: latent,
        beta,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BnLayer {
    gamma: ParamId,
    beta: ParamId,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layers {
    enc_conv: Vec<ParamId>,
    enc_bn: Vec<BnLayer>,
    enc_fc1: (ParamId, ParamId),
    enc_fc2: (ParamId, ParamId),
    codebook: ParamId,
    dec_fc1: (ParamId, ParamId),
    dec_fc2: (ParamId, ParamId),
    dec_conv: Vec<ParamId>,
    dec_bn: Vec<BnLayer>,
    dec_out_bias: ParamId,
}

/// Trained or freshly initialized model with its input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct VqVae {
    pub config: VqVaeConfig,
    pub params: ParamSet,
    layers: Layers,
    /// Global mean and standard deviation used to standardize inputs.
    pub norm: (f64, f64),
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub z_e: Var,
    pub codeword: Var,
    pub z_q: Var,
    pub x_hat: Var,
    pub indices: Vec<usize>,
    pub reconstruction: Var,
    pub codebook_loss: Var,
    pub commitment_loss: Var,
    pub loss: Var,
    bn_stats: Vec<BatchStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    pub z: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LatentTable {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.z.iter().map(|r| r[d]).collect()
    }
}

/// Per-column mean and unbiased standard deviation.
pub fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .iter()
        .map(|s| (s / (n - 1.0).max(1.0)).sqrt())
        .collect();
    (mean, std)
}

impl VqVae {
    pub fn new(config: VqVaeConfig, rng: &mut impl Rng) -> Result<Self, VqVaeError> {
        config.validate()?;
        let mut ps = ParamSet::new();
        let k = 4;
        let bn = |ps: &mut ParamSet, name: String, c: usize| BnLayer {
            gamma: ps.add(format!("{name}.gamma"), Tensor::full(&[c], 1.0)),
            beta: ps.add(format!("{name}.beta"), Tensor::zeros(&[c])),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        };
        fn linear(
            ps: &mut ParamSet,
            name: &str,
            fin: usize,
            fout: usize,
            rng: &mut impl Rng,
        ) -> (ParamId, ParamId) {
            (
                ps.add(
                    format!("{name}.weight"),
                    xavier_uniform(&[fout, fin], fin, fout, rng),
                ),
                ps.add(format!("{name}.bias"), Tensor::zeros(&[fout])),
            )
        }
        let mut enc_conv = Vec::new();
        let mut enc_bn = Vec::new();
        let mut cin = 1;
        for (i, &c) in config.channels.iter().enumerate() {
            enc_conv.push(ps.add(
                format!("enc.conv{i}.weight"),
                kaiming_uniform(&[c, cin, k, k], cin * k * k, rng),
            ));
            enc_bn.push(bn(&mut ps, format!("enc.bn{i}"), c));
            cin = c;
        }
        let flat = config.feature_len();
        let enc_fc1 = linear(&mut ps, "enc.fc1", flat, config.hidden, rng);
        let enc_fc2 = linear(&mut ps, "enc.fc2", config.hidden, config.latent_dim, rng);
        let r = 1.0 / config.codebook_size as f64;
        let codebook = ps.add(
            "codebook",
            uniform(&[config.codebook_size, config.latent_dim], -r, r, rng),
        );
        let dec_fc1 = linear(&mut ps, "dec.fc1", config.latent_dim, config.hidden, rng);
        let dec_fc2 = linear(&mut ps, "dec.fc2", config.hidden, flat, rng);
        let mut dec_conv = Vec::new();
        let mut dec_bn = Vec::new();
        let outs = [
            config.channels[2],
            config.channels[1],
            config.channels[0],
            1,
        ];
        let mut cin = config.channels[3];
        for (i, &c) in outs.iter().enumerate() {
            dec_conv.push(ps.add(
                format!("dec.deconv{i}.weight"),
                kaiming_uniform(&[cin, c, k, k], cin * k, rng),
            ));
            if i < 3 {
                dec_bn.push(bn(&mut ps, format!("dec.bn{i}"), c));
            }
            cin = c;
        }
        let dec_out_bias = ps.add("dec.deconv3.bias", Tensor::zeros(&[1]));
        Ok(Self {
            config,
            params: ps,
            layers: Layers {
                enc_conv,
                enc_bn,
                enc_fc1,
                enc_fc2,
                codebook,
                dec_fc1,
                dec_fc2,
                dec_conv,
                dec_bn,
                dec_out_bias,
            },
            norm: (0.0, 1.0),
        })
    }

    pub fn codebook(&self) -> &Tensor {
        self.params.get(self.layers.codebook)
    }

    fn bn(
        g: &mut Graph<'_>,
        x: Var,
        layer: &BnLayer,
        train: bool,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var, AutodiffError> {
        let (gm, bt) = (g.param(layer.gamma), g.param(layer.beta));
        if train {
            let (y, s) = g.batch_norm_train(x, gm, bt, BN_EPS)?;
            stats.push(s);
            Ok(y)
        } else {
            g.batch_norm_eval(x, gm, bt, &layer.running_mean, &layer.running_var, BN_EPS)
        }
    }

    fn dense(g: &mut Graph<'_>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var, AutodiffError> {
        let (w, b) = (g.param(w), g.param(b));
        g.linear(x, w, Some(b))
    }

    /// Encoder path from standardized images `[N, 1, H, W]` to `z_e [N, D]`.
    pub fn encode_graph(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        train: bool,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var, AutodiffError> {
        let n = g.shape(x)[0];
        let mut h = x;
        for (w, bn) in self.layers.enc_conv.iter().zip(&self.layers.enc_bn) {
            let w = g.param(*w);
            h = g.conv2d(h, w, None, 2, 1)?;
            h = Self::bn(g, h, bn, train, stats)?;
            h = g.relu(h);
        }
        h = g.reshape(h, &[n, self.config.feature_len()])?;
        h = Self::dense(g, h, self.layers.enc_fc1)?;
        h = g.relu(h);
        Self::dense(g, h, self.layers.enc_fc2)
    }

    /// Decoder path from latents `[N, D]` to standardized images.
    pub fn decode_graph(
        &self,
        g: &mut Graph<'_>,
        z: Var,
        train: bool,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var, AutodiffError> {
        let n = g.shape(z)[0];
        let (c, fh, fw) = self.config.feature_shape();
        let mut h = Self::dense(g, z, self.layers.dec_fc1)?;
        h = g.relu(h);
        h = Self::dense(g, h, self.layers.dec_fc2)?;
        h = g.relu(h);
        h = g.reshape(h, &[n, c, fh, fw])?;
        for (i, w) in self.layers.dec_conv.iter().enumerate() {
            let w = g.param(*w);
            if i < 3 {
                h = g.conv_transpose2d(h, w, None, 2, 1)?;
                h = Self::bn(g, h, &self.layers.dec_bn[i], train, stats)?;
                h = g.relu(h);
            } else {
                let b = g.param(self.layers.dec_out_bias);
                h = g.conv_transpose2d(h, w, Some(b), 2, 1)?;
            }
        }
        Ok(h)
    }

    /// Full forward pass with straight-through quantization and mean-reduced loss terms.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, train: bool) -> Result<Forward, VqVaeError> {
        let mut bn_stats = Vec::new();
        let z_e = self.encode_graph(g, x, train, &mut bn_stats)?;
        let d = self.config.latent_dim;
        let indices: Vec<usize> = g
            .value(z_e)
            .data()
            .chunks(d)
            .map(|z| quantize(z, self.codebook()).0)
            .collect();
        let table = g.param(self.layers.codebook);
        let codeword = g.gather_rows(table, &indices)?;
        let shift = g.sub(codeword, z_e)?;
        let shift = g.stop_gradient(shift);
        let z_q = g.add(z_e, shift)?;
        let x_hat = self.decode_graph(g, z_q, train, &mut bn_stats)?;
        let reconstruction = g.mse(x_hat, x)?;
        let z_sg = g.stop_gradient(z_e);
        let codebook_loss = g.mse(z_sg, codeword)?;
        let e_sg = g.stop_gradient(codeword);
        let commitment_loss = g.mse(z_e, e_sg)?;
        let weighted = g.scale(commitment_loss, self.config.beta);
        let partial = g.add(reconstruction, codebook_loss)?;
        let loss = g.add(partial, weighted)?;
        Ok(Forward {
            z_e,
            codeword,
            z_q,
            x_hat,
            indices,
            reconstruction,
            codebook_loss,
            commitment_loss,
            loss,
            bn_stats,
        })
    }

    fn update_running_stats(&mut self, stats: &[BatchStats]) {
        let m = self.config.bn_momentum;
        let layers = self
            .layers
            .enc_bn
            .iter_mut()
            .chain(self.layers.dec_bn.iter_mut());
        for (layer, s) in layers.zip(stats) {
            for (r, b) in layer.running_mean.iter_mut().zip(&s.mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in layer.running_var.iter_mut().zip(&s.var) {
                *r = (1.0 - m) * *r + m * b;
            }
        }
    }

    fn check_images(&self, images: &[f64]) -> Result<usize, VqVaeError> {
        let px = self.config.pixels();
        if images.is_empty() {
            return Err(VqVaeError::EmptyDataset);
        }
        if images.len() % px != 0 {
            return Err(VqVaeError::InputShape {
                expected: px,
                got: images.len() % px,
            });
        }
        Ok(images.len() / px)
    }

    fn standardized(&self, images: &[f64], rows: &[usize]) -> Tensor {
        let px = self.config.pixels();
        let (mu, sd) = self.norm;
        let mut data = Vec::with_capacity(rows.len() * px);
        for &r in rows {
            data.extend(images[r * px..(r + 1) * px].iter().map(|v| (v - mu) / sd));
        }
        Tensor::new(
            &[rows.len(), 1, self.config.height, self.config.width],
            data,
        )
        .unwrap()
    }

    /// Sets the input normalization to the global mean and standard deviation.
    pub fn fit_normalization(&mut self, images: &[f64]) -> Result<(), VqVaeError> {
        self.check_images(images)?;
        let n = images.len() as f64;
        let mu = images.iter().sum::<f64>() / n;
        let var = images.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        self.norm = (mu, if var > 0.0 { var.sqrt() } else { 1.0 });
        Ok(())
    }

    /// One optimizer step on a batch of dataset rows.
    pub fn train_step(
        &mut self,
        opt: &mut Adam,
        images: &[f64],
        rows: &[usize],
    ) -> Result<EpochLoss, VqVaeError> {
        let x = self.standardized(images, rows);
        let (grads, stats, terms) = {
            let mut g = Graph::new(&self.params);
            let xv = g.input(x);
            let f = self.forward(&mut g, xv, true)?;
            let terms = EpochLoss {
                total: g.value(f.loss).item(),
                reconstruction: g.value(f.reconstruction).item(),
                codebook: g.value(f.codebook_loss).item(),
                commitment: g.value(f.commitment_loss).item(),
            };
            if !terms.total.is_finite() {
                return Err(VqVaeError::NonFiniteLoss { epoch: 0, batch: 0 });
            }
            let grads = g.backward(f.loss)?.param_grads(&self.params);
            (grads, f.bn_stats, terms)
        };
        opt.step(&mut self.params, &grads)?;
        self.update_running_stats(&stats);
        Ok(terms)
    }

    /// Trains on `images` (row-major `[N, H*W]`) and returns per-epoch mean losses.
    pub fn train(
        &mut self,
        images: &[f64],
        rng: &mut impl Rng,
    ) -> Result<Vec<EpochLoss>, VqVaeError> {
        let n = self.check_images(images)?;
        self.fit_normalization(images)?;
        let mut opt = Adam::new(&self.params, AdamConfig::with_lr(self.config.lr));
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            order.shuffle(rng);
            let mut acc = EpochLoss {
                total: 0.0,
                reconstruction: 0.0,
                codebook: 0.0,
                commitment: 0.0,
            };
            for (batch, rows) in order.chunks(self.config.batch_size).enumerate() {
                let t = self
                    .train_step(&mut opt, images, rows)
                    .map_err(|e| match e {
                        VqVaeError::NonFiniteLoss { .. }
                        | VqVaeError::Autodiff(AutodiffError::NonFiniteGradient(_)) => {
                            VqVaeError::NonFiniteLoss { epoch, batch }
                        }
                        other => other,
                    })?;
                let w = rows.len() as f64 / n as f64;
                acc.total += w * t.total;
                acc.reconstruction += w * t.reconstruction;
                acc.codebook += w * t.codebook;
                acc.commitment += w * t.commitment;
            }
            history.push(acc);
        }
        Ok(history)
    }

    /// Continuous latents `z_e` of raw images, eval-mode batchnorm.
    pub fn encode(&self, images: &[f64]) -> Result<Vec<Vec<f64>>, VqVaeError> {
        let n = self.check_images(images)?;
        let rows: Vec<usize> = (0..n).collect();
        let chunks: Vec<Vec<Vec<f64>>> = rows
            .par_chunks(ENCODE_CHUNK)
            .map(|chunk| {
                let mut g = Graph::new(&self.params);
                let x = g.input(self.standardized(images, chunk));
                let z = self.encode_graph(&mut g, x, false, &mut Vec::new())?;
                Ok(g.value(z)
                    .data()
                    .chunks(self.config.latent_dim)
                    .map(<[f64]>::to_vec)
                    .collect())
            })
            .collect::<Result<_, VqVaeError>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Raw-scale images decoded from latent vectors.
    pub fn decode(&self, latents: &[Vec<f64>]) -> Result<Vec<f64>, VqVaeError> {
        let d = self.config.latent_dim;
        if let Some(bad) = latents.iter().find(|z| z.len() != d) {
            return Err(VqVaeError::InputShape {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = latents.iter().flatten().copied().collect();
        let mut g = Graph::new(&self.params);
        let z = g.input(Tensor::new(&[latents.len(), d], flat)?);
        let x = self.decode_graph(&mut g, z, false, &mut Vec::new())?;
        let (mu, sd) = self.norm;
        Ok(g.value(x).data().iter().map(|v| v * sd + mu).collect())
    }

    pub fn encode_dataset(&self, images: &[f64]) -> Result<LatentTable, VqVaeError> {
        let z = self.encode(images)?;
        let indices = z.iter().map(|r| quantize(r, self.codebook()).0).collect();
        let (mean, std) = column_stats(&z);
        Ok(LatentTable {
            z,
            indices,
            mean,
            std,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::from_params(&self.params);
        let arch = [
            c.height,
            c.width,
            c.channels[0],
            c.channels[1],
            c.channels[2],
            c.channels[3],
            c.hidden,
            c.latent_dim,
            c.codebook_size,
        ];
        ck.push(
            "vqvae.arch",
            Tensor::new(&[9], arch.iter().map(|v| *v as f64).collect()).unwrap(),
        );
        ck.push(
            "vqvae.hyper",
            Tensor::new(
                &[6],
                vec![
                    c.beta,
                    c.epochs as f64,
                    c.batch_size as f64,
                    c.lr,
                    c.bn_momentum,
                    0.0,
                ],
            )
            .unwrap(),
        );
        ck.push(
            "vqvae.norm",
            Tensor::new(&[2], vec![self.norm.0, self.norm.1]).unwrap(),
        );
        for (name, layer) in self.bn_layers() {
            let n = layer.running_mean.len();
            ck.push(
                format!("{name}.running_mean"),
                Tensor::new(&[n], layer.running_mean.clone()).unwrap(),
            );
            ck.push(
                format!("{name}.running_var"),
                Tensor::new(&[n], layer.running_var.clone()).unwrap(),
            );
        }
        ck
    }

    fn bn_layers(&self) -> Vec<(String, &BnLayer)> {
        let enc = self
            .layers
            .enc_bn
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("enc.bn{i}"), l));
        let dec = self
            .layers
            .dec_bn
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("dec.bn{i}"), l));
        enc.chain(dec).collect()
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, VqVaeError> {
        let missing = |n: &str| VqVaeError::Checkpoint(format!("missing block `{n}`"));
        let arch = ck
            .get("vqvae.arch")
            .filter(|t| t.len() == 9)
            .ok_or_else(|| missing("vqvae.arch"))?;
        let hyper = ck
            .get("vqvae.hyper")
            .filter(|t| t.len() == 6)
            .ok_or_else(|| missing("vqvae.hyper"))?;
        let norm = ck
            .get("vqvae.norm")
            .filter(|t| t.len() == 2)
            .ok_or_else(|| missing("vqvae.norm"))?;
        let a: Vec<usize> = arch.data().iter().map(|v| *v as usize).collect();
        let h = hyper.data();
        let config = VqVaeConfig {
            height: a[0],
            width: a[1],
            channels: [a[2], a[3], a[4], a[5]],
            hidden: a[6],
            latent_dim: a[7],
            codebook_size: a[8],
            beta: h[0],
            epochs: h[1] as usize,
            batch_size: h[2] as usize,
            lr: h[3],
            bn_momentum: h[4],
        };
        let mut model = Self::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_into(&mut model.params)?;
        model.norm = (norm.data()[0], norm.data()[1]);
        let names: Vec<String> = model.bn_layers().into_iter().map(|(n, _)| n).collect();
        let layers = model
            .layers
            .enc_bn
            .iter_mut()
            .chain(model.layers.dec_bn.iter_mut());
        for (name, layer) in names.iter().zip(layers) {
            for (suffix, dst) in [
                ("running_mean", &mut layer.running_mean),
                ("running_var", &mut layer.running_var),
            ] {
                let key = format!("{name}.{suffix}");
                let t = ck
                    .get(&key)
                    .filter(|t| t.len() == dst.len())
                    .ok_or_else(|| missing(&key))?;
                dst.copy_from_slice(t.data());
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VqVaeConfig {
        VqVaeConfig {
            height: 16,
            width: 32,
            channels: [4, 4, 8, 8],
            hidden: 16,
            codebook_size: 16,
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            ..VqVaeConfig::default()
        }
    }

    fn images(n: usize, px: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * px).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn reference_shapes() {
        let c = VqVaeConfig::default();
        assert_eq!(c.feature_shape(), (256, 4, 16));
        assert_eq!(c.feature_len(), 16384);
        let m = VqVae::new(c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.codebook().shape(), &[128, 7]);
        let bound = 1.0 / 128.0;
        assert!(m.codebook().data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn encode_and_decode_shapes() {
        let cfg = small();
        let m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let zero = vec![0.0; cfg.pixels()];
        let z = m.encode(&zero).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].len(), 7);
        assert!(z[0].iter().all(|v| v.is_finite()));
        let x = images(2, cfg.pixels(), 2);
        let mut twice = x[..cfg.pixels()].to_vec();
        twice.extend_from_slice(&x[..cfg.pixels()]);
        let z = m.encode(&twice).unwrap();
        assert_eq!(z[0], z[1]);
        assert!(matches!(
            m.encode(&[0.0; 5]),
            Err(VqVaeError::InputShape { .. })
        ));

        let e = vec![vec![10.0; 7], vec![-10.0; 7]];
        let out = m.decode(&e).unwrap();
        assert_eq!(out.len(), 2 * cfg.pixels());
        assert!(out.iter().all(|v| v.is_finite()));
        assert_eq!(out, m.decode(&e).unwrap());
        assert!(m.decode(&[vec![0.0; 3]]).is_err());
    }

    #[test]
    fn quantize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cb = Tensor::from_fn(&[128, 7], |_| rng.random_range(-1.0..1.0));
        let row17 = cb.data()[17 * 7..18 * 7].to_vec();
        assert_eq!(quantize(&row17, &cb), (17, 0.0));
        for k in 0..128 {
            assert_eq!(quantize(&cb.data()[k * 7..(k + 1) * 7], &cb).0, k);
        }
        let mut tie = Tensor::zeros(&[10, 1]);
        tie.data_mut().iter_mut().for_each(|v| *v = 100.0);
        tie.data_mut()[3] = 1.0;
        tie.data_mut()[9] = -1.0;
        assert_eq!(quantize(&[0.0], &tie).0, 3);
        for _ in 0..50 {
            let z: Vec<f64> = (0..7).map(|_| rng.random_range(-1.5..1.5)).collect();
            let brute = (0..128)
                .map(|k| {
                    (
                        k,
                        cb.data()[k * 7..(k + 1) * 7]
                            .iter()
                            .zip(&z)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>(),
                    )
                })
                .fold(
                    (0, f64::INFINITY),
                    |best, c| if c.1 < best.1 { c } else { best },
                );
            assert_eq!(quantize(&z, &cb).0, brute.0);
        }
    }

    #[test]
    fn loss_identities() {
        let x = [1.0, 2.0];
        let z = [0.5, -0.5, 2.0];
        let t = vqvae_loss(&x, &x, &z, &z, 0.2);
        assert_eq!(t.total(), 0.0);
        let e = [0.0, 0.0, 1.0];
        let t = vqvae_loss(&x, &x, &z, &e, 0.2);
        let d2 = 0.25 + 0.25 + 1.0;
        assert!((t.total() - d2 * 1.2).abs() < 1e-15);
        assert_eq!(
            t.total(),
            t.reconstruction + t.codebook + t.beta * t.commitment
        );
        assert_eq!(VqVaeConfig::default().beta, 0.2);
    }

    #[test]
    fn straight_through_copies_decoder_gradient() {
        let cfg = VqVaeConfig {
            beta: 0.0,
            ..small()
        };
        let m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let x = Tensor::new(&[3, 1, cfg.height, cfg.width], images(3, cfg.pixels(), 5)).unwrap();
        let mut g = Graph::new(&m.params);
        let xv = g.input(x);
        let f = m.forward(&mut g, xv, true).unwrap();
        let grads = g.backward(f.reconstruction).unwrap();
        let (at_ze, at_zq) = (grads.wrt(f.z_e).unwrap(), grads.wrt(f.z_q).unwrap());
        for (a, b) in at_ze.data().iter().zip(at_zq.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn codebook_gradient_touches_only_selected_rows() {
        let cfg = small();
        let m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let x = Tensor::new(&[2, 1, cfg.height, cfg.width], images(2, cfg.pixels(), 7)).unwrap();
        let mut g = Graph::new(&m.params);
        let xv = g.input(x);
        let f = m.forward(&mut g, xv, true).unwrap();
        let grads = g.backward(f.codebook_loss).unwrap();
        let gc = grads.param(m.layers.codebook).unwrap();
        for k in 0..cfg.codebook_size {
            let row = &gc.data()[k * 7..(k + 1) * 7];
            if !f.indices.contains(&k) {
                assert!(row.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn single_sample_overfits() {
        let cfg = VqVaeConfig {
            height: 32,
            width: 64,
            channels: [8, 16, 16, 32],
            hidden: 32,
            epochs: 200,
            batch_size: 1,
            lr: 1e-2,
            ..small()
        };
        let mut m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let x: Vec<f64> = (0..cfg.pixels())
            .map(|i| ((i % cfg.width) as f64 * 0.4).sin() + ((i / cfg.width) as f64 * 0.7).cos())
            .collect();
        let h = m.train(&x, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let first = h[0].reconstruction;
        let last = h.last().unwrap().reconstruction;
        assert!(last < 0.01 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let cfg = small();
        let data = images(10, cfg.pixels(), 10);
        let run = || {
            let mut m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
            let h = m.train(&data, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
            (h, m.params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dataset_stats_match_two_pass_oracle() {
        let cfg = small();
        let m = VqVae::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let t = m.encode_dataset(&images(37, cfg.pixels(), 14)).unwrap();
        assert_eq!(t.z.len(), 37);
        assert!(t.indices.iter().all(|k| *k < cfg.codebook_size));
        for d in 0..7 {
            let col = t.column(d);
            let mean = col.iter().sum::<f64>() / 37.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
            assert!((t.mean[d] - mean).abs() < 1e-12);
            assert!((t.std[d] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let cfg = small();
        let data = images(6, cfg.pixels(), 15);
        let mut m = VqVae::new(cfg, &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
        m.train(&data, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        let back = VqVae::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.encode(&data).unwrap(), m.encode(&data).unwrap());
    }
}
