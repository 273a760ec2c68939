//! Single-layer LSTM that emits latent dimensions one after another.

use crate::autodiff::init::xavier_uniform;
use crate::autodiff::sigmoid;
use crate::autodiff::{
    Adam, AdamConfig, AutodiffError, Checkpoint, Graph, ParamId, ParamSet, Tensor, Var,
};
use crate::seed::{stage_rng, Stage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstmError {
    #[error("latent table is empty")]
    EmptyData,
    #[error("rows must share one length; row {row} has {got}, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub forget_bias: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            forget_bias: 1.0,
        }
    }
}

const GATES: [&str; 4] = ["input", "forget", "output", "cell"];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Gate {
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

/// Gate weights (input/forget/output/candidate) and the linear output head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub params: ParamSet,
    gates: [Gate; 4],
    head_w: ParamId,
    head_b: ParamId,
    hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Output of one cell step with the gate activations.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub y: f64,
    pub state: LstmState,
    pub gates: [Vec<f64>; 3],
}

impl LstmParams {
    pub fn new(hidden: usize, forget_bias: f64, rng: &mut impl Rng) -> Self {
        let mut ps = ParamSet::new();
        let gates = GATES.map(|name| {
            let bias = if name == "forget" { forget_bias } else { 0.0 };
            Gate {
                w_x: ps.add(
                    format!("lstm.{name}.w_x"),
                    xavier_uniform(&[hidden, 1], 1, hidden, rng),
                ),
                w_h: ps.add(
                    format!("lstm.{name}.w_h"),
                    xavier_uniform(&[hidden, hidden], hidden, hidden, rng),
                ),
                b: ps.add(format!("lstm.{name}.bias"), Tensor::full(&[hidden], bias)),
            }
        });
        let head_w = ps.add(
            "lstm.head.weight",
            xavier_uniform(&[1, hidden], hidden, 1, rng),
        );
        let head_b = ps.add("lstm.head.bias", Tensor::zeros(&[1]));
        Self {
            params: ps,
            gates,
            head_w,
            head_b,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Direct evaluation of one step.
    pub fn cell(&self, x: f64, state: &LstmState) -> CellOutput {
        let hsz = self.hidden;
        let pre = |g: &Gate| -> Vec<f64> {
            let (wx, wh, b) = (
                self.params.get(g.w_x).data(),
                self.params.get(g.w_h).data(),
                self.params.get(g.b).data(),
            );
            (0..hsz)
                .map(|i| {
                    let rec: f64 = wh[i * hsz..(i + 1) * hsz]
                        .iter()
                        .zip(&state.h)
                        .map(|(w, h)| w * h)
                        .sum();
                    wx[i] * x + rec + b[i]
                })
                .collect()
        };
        let i: Vec<f64> = pre(&self.gates[0]).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = pre(&self.gates[1]).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = pre(&self.gates[2]).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = pre(&self.gates[3]).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..hsz).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let h: Vec<f64> = (0..hsz).map(|k| o[k] * c[k].tanh()).collect();
        let hw = self.params.get(self.head_w).data();
        let y = hw.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            + self.params.get(self.head_b).data()[0];
        CellOutput {
            y,
            state: LstmState { h, c },
            gates: [i, f, o],
        }
    }

    /// Records one batched step: `x [B, 1]`, `h`, `c` `[B, H]`.
    pub fn cell_graph(
        &self,
        g: &mut Graph<'_>,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var, Var), AutodiffError> {
        let mut acts = Vec::with_capacity(4);
        for (k, gate) in self.gates.iter().enumerate() {
            let (wx, wh, b) = (g.param(gate.w_x), g.param(gate.w_h), g.param(gate.b));
            let from_x = g.linear(x, wx, Some(b))?;
            let from_h = g.linear(h, wh, None)?;
            let pre = g.add(from_x, from_h)?;
            acts.push(if k == 3 { g.tanh(pre) } else { g.sigmoid(pre) });
        }
        let kept = g.mul(acts[1], c)?;
        let written = g.mul(acts[0], acts[3])?;
        let c_next = g.add(kept, written)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(acts[2], squashed)?;
        let (hw, hb) = (g.param(self.head_w), g.param(self.head_b));
        let y = g.linear(h_next, hw, Some(hb))?;
        Ok((y, h_next, c_next))
    }

    /// Teacher-forced mean squared error over a batch; `x0[b]` is the first input.
    pub fn teacher_forced_loss(
        &self,
        g: &mut Graph<'_>,
        rows: &[&[f64]],
        x0: &[f64],
    ) -> Result<Var, AutodiffError> {
        let bsz = rows.len();
        let steps = rows[0].len();
        let mut h = g.input(Tensor::zeros(&[bsz, self.hidden]));
        let mut c = g.input(Tensor::zeros(&[bsz, self.hidden]));
        let mut total: Option<Var> = None;
        for t in 0..steps {
            let inputs: Vec<f64> = if t == 0 {
                x0.to_vec()
            } else {
                rows.iter().map(|r| r[t - 1]).collect()
            };
            let x = g.input(Tensor::new(&[bsz, 1], inputs)?);
            let (y, hn, cn) = self.cell_graph(g, x, h, c)?;
            let target = g.input(Tensor::new(&[bsz, 1], rows.iter().map(|r| r[t]).collect())?);
            let err = g.mse(y, target)?;
            total = Some(match total {
                None => err,
                Some(acc) => g.add(acc, err)?,
            });
            h = hn;
            c = cn;
        }
        Ok(g.scale(total.expect("at least one step"), 1.0 / steps as f64))
    }

    /// Autoregressive generation from `x0`.
    pub fn generate(&self, x0: f64, steps: usize) -> Vec<f64> {
        let mut state = LstmState::zeros(self.hidden);
        let mut x = x0;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let step = self.cell(x, &state);
            out.push(step.y);
            x = step.y;
            state = step.state;
        }
        out
    }

    /// One latent vector with `x0 ~ N(0, 1)`.
    pub fn sample_latent_vector(&self, steps: usize, rng: &mut impl Rng) -> Vec<f64> {
        self.generate(rng.sample(StandardNormal), steps)
    }

    pub fn sample(&self, count: usize, steps: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let seeds: Vec<f64> = (0..count).map(|_| rng.sample(StandardNormal)).collect();
        seeds
            .par_iter()
            .map(|x0| self.generate(*x0, steps))
            .collect()
    }

    pub fn to_checkpoint(&self, steps: usize) -> Checkpoint {
        let mut c = Checkpoint::from_params(&self.params);
        c.push("lstm.steps", Tensor::new(&[1], vec![steps as f64]).unwrap());
        c
    }

    /// Parameters and sequence length.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, usize), AutodiffError> {
        let missing = |n: &str| AutodiffError::Checkpoint(format!("missing block `{n}`"));
        let head = c
            .get("lstm.head.weight")
            .ok_or_else(|| missing("lstm.head.weight"))?;
        let steps = c
            .get("lstm.steps")
            .filter(|t| t.len() == 1)
            .ok_or_else(|| missing("lstm.steps"))?;
        let mut p = Self::new(head.len(), 0.0, &mut stage_rng(0, Stage::Lstm, 0));
        c.load_into(&mut p.params)?;
        Ok((p, steps.data()[0] as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTraining {
    pub params: LstmParams,
    /// Mean teacher-forced loss per epoch.
    pub history: Vec<f64>,
}

/// Mini-batch Adam with fresh `x0` noise per sample and epoch.
/// Randomness draws from stream `(Lstm, 0)`.
pub fn train_lstm(
    rows: &[Vec<f64>],
    config: &LstmConfig,
    seed: u64,
) -> Result<LstmTraining, LstmError> {
    let first = rows.first().ok_or(LstmError::EmptyData)?;
    let steps = first.len();
    if steps == 0 {
        return Err(LstmError::EmptyData);
    }
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != steps) {
        return Err(LstmError::Ragged {
            row,
            expected: steps,
            got: r.len(),
        });
    }
    let mut rng = stage_rng(seed, Stage::Lstm, 0);
    let mut model = LstmParams::new(config.hidden, config.forget_bias, &mut rng);
    let mut opt = Adam::new(&model.params, AdamConfig::with_lr(config.lr));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let noise: Vec<f64> = (0..rows.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_rows: Vec<&[f64]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
            let x0: Vec<f64> = chunk.iter().map(|&i| noise[i]).collect();
            let (loss, grads) = {
                let mut g = Graph::new(&model.params);
                let l = model.teacher_forced_loss(&mut g, &batch_rows, &x0)?;
                let v = g.value(l).item();
                if !v.is_finite() {
                    return Err(LstmError::NonFiniteLoss { epoch, batch });
                }
                (v, g.backward(l)?.param_grads(&model.params))
            };
            opt.step(&mut model.params, &grads)
                .map_err(|_| LstmError::NonFiniteLoss { epoch, batch })?;
            epoch_loss += loss * chunk.len() as f64 / rows.len() as f64;
        }
        history.push(epoch_loss);
    }
    Ok(LstmTraining {
        params: model,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_step() {
        let mut p = LstmParams::new(8, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        for id in p.params.ids().collect::<Vec<_>>() {
            p.params
                .get_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let out = p.cell(0.0, &LstmState::zeros(8));
        assert_eq!(out.y, 0.0);
        assert!(out.state.h.iter().chain(&out.state.c).all(|v| *v == 0.0));
    }

    #[test]
    fn gates_are_in_unit_interval_and_graph_matches_direct() {
        let p = LstmParams::new(16, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let mut state = LstmState::zeros(16);
        let mut g = Graph::new(&p.params);
        let mut h = g.input(Tensor::zeros(&[1, 16]));
        let mut c = g.input(Tensor::zeros(&[1, 16]));
        for x in [0.3, -2.0, 5.0] {
            let out = p.cell(x, &state);
            assert!(out.gates.iter().flatten().all(|v| *v > 0.0 && *v < 1.0));
            assert!(out.state.h.iter().all(|v| v.abs() < 1.0));
            let xv = g.input(Tensor::new(&[1, 1], vec![x]).unwrap());
            let (y, hn, cn) = p.cell_graph(&mut g, xv, h, c).unwrap();
            assert!((g.value(y).item() - out.y).abs() < 1e-12);
            for (a, b) in g.value(hn).data().iter().zip(&out.state.h) {
                assert!((a - b).abs() < 1e-12);
            }
            (h, c) = (hn, cn);
            state = out.state;
        }
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        let p = LstmParams::new(5, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        let rows = [
            [0.5, -0.2, 1.0, 0.3, -1.1, 0.8, 0.0],
            [1.5, 0.2, -0.4, 0.9, 0.1, -0.3, 0.6],
        ];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let x0 = [0.7, -0.4];
        let model = p.clone();
        let report = gradient_check(
            &p.params,
            |g| model.teacher_forced_loss(g, &refs, &x0),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_error() < 1e-4, "{report:?}");
    }

    #[test]
    fn loss_is_invariant_to_batch_order() {
        let p = LstmParams::new(6, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        let a = [0.1, 0.2, 0.3];
        let b = [-1.0, 0.5, 2.0];
        let eval = |rows: &[&[f64]], x0: &[f64]| {
            let mut g = Graph::new(&p.params);
            let l = p.teacher_forced_loss(&mut g, rows, x0).unwrap();
            g.value(l).item()
        };
        let l1 = eval(&[&a, &b], &[0.3, -0.3]);
        let l2 = eval(&[&b, &a], &[-0.3, 0.3]);
        assert!((l1 - l2).abs() < 1e-14);
    }

    #[test]
    fn memorizes_a_constant_vector() {
        let target = vec![0.5, -1.0, 0.25, 1.5, -0.75, 0.0, 1.0];
        let rows = vec![target.clone(); 32];
        let cfg = LstmConfig {
            hidden: 32,
            epochs: 400,
            lr: 0.01,
            ..LstmConfig::default()
        };
        let t = train_lstm(&rows, &cfg, 5).unwrap();
        assert_eq!(t.history.len(), 400);
        let last = *t.history.last().unwrap();
        assert!(last < 1e-4, "{last}");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let v = t.params.sample_latent_vector(7, &mut rng);
            assert_eq!(v.len(), 7);
            for (a, b) in v.iter().zip(&target) {
                assert!((a - b).abs() < 0.1, "{v:?}");
            }
        }
    }

    #[test]
    fn training_and_sampling_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..7).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let cfg = LstmConfig {
            hidden: 8,
            epochs: 3,
            ..LstmConfig::default()
        };
        let a = train_lstm(&rows, &cfg, 8).unwrap();
        let b = train_lstm(&rows, &cfg, 8).unwrap();
        assert_eq!(a, b);
        let s1 = a.params.sample(10, 7, &mut ChaCha8Rng::seed_from_u64(9));
        let s2 = b.params.sample(10, 7, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(s1, s2);
        assert!(s1.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = LstmParams::new(8, 1.0, &mut ChaCha8Rng::seed_from_u64(10));
        let (back, steps) = LstmParams::from_checkpoint(&p.to_checkpoint(7)).unwrap();
        assert_eq!(steps, 7);
        assert_eq!(back, p);
    }
}
