use super::conv::{
    conv2d_backward, conv2d_forward, conv2d_geometry, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose2d_geometry, ConvGeometry,
};
use super::linalg::gemm;
use super::{AutodiffError, ParamId, ParamSet, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel statistics of a training-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, as used for running estimates.
    pub var: Vec<f64>,
}

const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mse(Var, Var),
    Bce {
        p: Var,
        target: Var,
    },
    StopGradient,
    GatherRows {
        table: Var,
        rows: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameters, whose value lives in the borrowed set.
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Eager tape of tensor operations over a borrowed parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without a value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check(&self, v: Var) -> Result<(), AutodiffError> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::UnknownNode(v.0))
        }
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value, false)
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn tracked_input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value, true)
    }

    /// The node for a parameter block; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// `x [N, in] · w[out, in]^T + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, AutodiffError> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let (&[n, fin], &[fout, win]) = (xs, ws) else {
            return Err(AutodiffError::shape(
                "linear",
                format!("input {xs:?}, weight {ws:?}"),
            ));
        };
        if fin != win {
            return Err(AutodiffError::shape(
                "linear",
                format!("input {xs:?}, weight {ws:?}"),
            ));
        }
        let mut out = Tensor::zeros(&[n, fout]);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != fout {
                return Err(AutodiffError::shape(
                    "linear",
                    format!("bias {:?} for {fout} outputs", bv.shape()),
                ));
            }
            for row in out.data_mut().chunks_mut(fout) {
                row.copy_from_slice(bv.data());
            }
        }
        gemm(
            n,
            fin,
            fout,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            out.data_mut(),
        );
        let rg = self.grad_of(&[x, w]) || b.is_some_and(|b| self.grad_of(&[b]));
        Ok(self.push(Op::Linear { x, w, b }, out, rg))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutodiffError> {
        let bias = b.map(|b| self.value(b));
        let (geom, _, _) = conv2d_geometry(self.value(x), self.value(w), bias, stride, pad)?;
        let out = conv2d_forward(self.value(x), self.value(w), bias, stride, pad)?;
        let rg = self.grad_of(&[x, w]) || b.is_some_and(|b| self.grad_of(&[b]));
        Ok(self.push(Op::Conv2d { x, w, b, geom }, out, rg))
    }

    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutodiffError> {
        let bias = b.map(|b| self.value(b));
        let (geom, _, _) =
            conv_transpose2d_geometry(self.value(x), self.value(w), bias, stride, pad)?;
        let out = conv_transpose2d_forward(self.value(x), self.value(w), bias, stride, pad)?;
        let rg = self.grad_of(&[x, w]) || b.is_some_and(|b| self.grad_of(&[b]));
        Ok(self.push(Op::ConvTranspose2d { x, w, b, geom }, out, rg))
    }

    fn bn_layout(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(usize, usize, usize), AutodiffError> {
        let s = self.shape(x);
        if s.len() < 2 {
            return Err(AutodiffError::shape(
                "batch_norm",
                format!("input {s:?} has no channel axis"),
            ));
        }
        let (n, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(AutodiffError::shape(
                "batch_norm",
                format!("affine params for {c} channels"),
            ));
        }
        Ok((n, c, inner))
    }

    /// Batch normalization with batch statistics over all axes but 1.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats), AutodiffError> {
        let (n, c, inner) = self.bn_layout(x, gamma, beta)?;
        let count = (n * inner) as f64;
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                mean[ch] += xv.data()[base..base + inner].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                var[ch] += xv.data()[base..base + inner]
                    .iter()
                    .map(|v| (v - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        let biased: Vec<f64> = var.iter().map(|v| v / count).collect();
        let inv_std: Vec<f64> = biased.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = Tensor::zeros(xv.shape());
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                for k in base..base + inner {
                    xhat[k] = (xv.data()[k] - mean[ch]) * inv_std[ch];
                    out.data_mut()[k] = g[ch] * xhat[k] + bt[ch];
                }
            }
        }
        let stats = BatchStats {
            mean,
            var: var.iter().map(|v| v / (count - 1.0).max(1.0)).collect(),
        };
        let rg = self.grad_of(&[x, gamma, beta]);
        let v = self.push(
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            out,
            rg,
        );
        Ok((v, stats))
    }

    /// Batch normalization with fixed statistics: a per-channel affine map.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let (n, c, inner) = self.bn_layout(x, gamma, beta)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(AutodiffError::shape(
                "batch_norm",
                "running statistics length",
            ));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = Tensor::zeros(xv.shape());
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                for k in base..base + inner {
                    out.data_mut()[k] =
                        g[ch] * (xv.data()[k] - running_mean[ch]) * inv_std[ch] + bt[ch];
                }
            }
        }
        let rg = self.grad_of(&[x, gamma, beta]);
        Ok(self.push(
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean: running_mean.to_vec(),
                inv_std,
            },
            out,
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.grad_of(&[x]);
        self.push(Op::Relu(x), out, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.grad_of(&[x]);
        self.push(Op::Sigmoid(x), out, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let rg = self.grad_of(&[x]);
        self.push(Op::Tanh(x), out, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let out = self.value(x).reshaped(shape).map_err(|_| {
            AutodiffError::shape("reshape", format!("{:?} -> {shape:?}", self.shape(x)))
        })?;
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Reshape(x), out, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(AutodiffError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Sub(a, b), out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.grad_of(&[x]);
        self.push(Op::Scale(x, factor), out, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).data().iter().sum());
        let rg = self.grad_of(&[x]);
        self.push(Op::Sum(x), out, rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mse", a, b)?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let n = av.len().max(1) as f64;
        let total: f64 = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mse(a, b), Tensor::scalar(total / n), rg))
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`.
    /// `p` is clamped to `[1e-12, 1 - 1e-12]`; no gradient flows to `target`.
    pub fn bce(&mut self, p: Var, target: Var) -> Result<Var, AutodiffError> {
        self.same_shape("bce", p, target)?;
        let (pv, tv) = (self.value(p).data(), self.value(target).data());
        let n = pv.len().max(1) as f64;
        let total: f64 = pv
            .iter()
            .zip(tv)
            .map(|(p, t)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        let rg = self.grad_of(&[p]);
        Ok(self.push(Op::Bce { p, target }, Tensor::scalar(total / n), rg))
    }

    /// Same value as `x`; blocks all gradient flow into `x`.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let out = self.value(x).clone();
        self.push(Op::StopGradient, out, false)
    }

    /// Rows of a `[K, D]` table, in the given order.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let tv = self.value(table);
        let &[k, d] = tv.shape() else {
            return Err(AutodiffError::shape(
                "gather_rows",
                format!("table {:?}", tv.shape()),
            ));
        };
        if let Some(bad) = rows.iter().find(|r| **r >= k) {
            return Err(AutodiffError::shape(
                "gather_rows",
                format!("row {bad} of {k}"),
            ));
        }
        let mut out = Tensor::zeros(&[rows.len(), d]);
        for (i, r) in rows.iter().enumerate() {
            out.data_mut()[i * d..(i + 1) * d].copy_from_slice(&tv.data()[r * d..(r + 1) * d]);
        }
        let rg = self.grad_of(&[table]);
        Ok(self.push(
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
            out,
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            let out = node.value.as_ref();
            match &node.op {
                Op::Input | Op::Param(_) | Op::StopGradient => {}
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, fin) = (xv.shape()[0], xv.shape()[1]);
                    let fout = wv.shape()[0];
                    if self.nodes[x.0].requires_grad {
                        let mut dx = Tensor::zeros(xv.shape());
                        gemm(
                            n,
                            fout,
                            fin,
                            g.data(),
                            false,
                            wv.data(),
                            false,
                            0.0,
                            dx.data_mut(),
                        );
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.nodes[w.0].requires_grad {
                        let mut dw = Tensor::zeros(wv.shape());
                        gemm(
                            fout,
                            n,
                            fin,
                            g.data(),
                            true,
                            xv.data(),
                            false,
                            0.0,
                            dw.data_mut(),
                        );
                        accumulate(&mut grads, *w, dw);
                    }
                    if let Some(b) = b.filter(|b| self.nodes[b.0].requires_grad) {
                        let mut db = Tensor::zeros(&[fout]);
                        for row in g.data().chunks(fout) {
                            for (d, r) in db.data_mut().iter_mut().zip(row) {
                                *d += r;
                            }
                        }
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::Conv2d { x, w, b, geom } | Op::ConvTranspose2d { x, w, b, geom } => {
                    let need_dx = self.nodes[x.0].requires_grad;
                    let (dx, dw, db) = if matches!(node.op, Op::Conv2d { .. }) {
                        conv2d_backward(self.value(*x), self.value(*w), &g, geom, need_dx)
                    } else {
                        conv_transpose2d_backward(self.value(*x), self.value(*w), &g, geom, need_dx)
                    };
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.nodes[w.0].requires_grad {
                        accumulate(&mut grads, *w, dw);
                    }
                    if let Some(b) = b.filter(|b| self.nodes[b.0].requires_grad) {
                        accumulate(&mut grads, b, db);
                    }
                }
                Op::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let shape = self.shape(*x);
                    let (n, c) = (shape[0], shape[1]);
                    let inner: usize = shape[2..].iter().product();
                    let m = (n * inner) as f64;
                    let gv = self.value(*gamma).data();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for s in 0..n {
                        for ch in 0..c {
                            let base = (s * c + ch) * inner;
                            for k in base..base + inner {
                                dgamma[ch] += g.data()[k] * xhat[k];
                                dbeta[ch] += g.data()[k];
                            }
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let mut dx = Tensor::zeros(shape);
                        for s in 0..n {
                            for ch in 0..c {
                                let base = (s * c + ch) * inner;
                                // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
                                let scale = gv[ch] * inv_std[ch] / m;
                                for k in base..base + inner {
                                    dx.data_mut()[k] = scale
                                        * (m * g.data()[k] - dbeta[ch] - xhat[k] * dgamma[ch]);
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.nodes[gamma.0].requires_grad {
                        accumulate(&mut grads, *gamma, Tensor::new(&[c], dgamma).unwrap());
                    }
                    if self.nodes[beta.0].requires_grad {
                        accumulate(&mut grads, *beta, Tensor::new(&[c], dbeta).unwrap());
                    }
                }
                Op::BatchNormEval {
                    x,
                    gamma,
                    beta,
                    mean,
                    inv_std,
                } => {
                    let xv = self.value(*x);
                    let (n, c) = (xv.shape()[0], xv.shape()[1]);
                    let inner: usize = xv.shape()[2..].iter().product();
                    let gv = self.value(*gamma).data();
                    let mut dx = Tensor::zeros(xv.shape());
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for s in 0..n {
                        for ch in 0..c {
                            let base = (s * c + ch) * inner;
                            for k in base..base + inner {
                                let gk = g.data()[k];
                                dx.data_mut()[k] = gk * gv[ch] * inv_std[ch];
                                dgamma[ch] += gk * (xv.data()[k] - mean[ch]) * inv_std[ch];
                                dbeta[ch] += gk;
                            }
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.nodes[gamma.0].requires_grad {
                        accumulate(&mut grads, *gamma, Tensor::new(&[c], dgamma).unwrap());
                    }
                    if self.nodes[beta.0].requires_grad {
                        accumulate(&mut grads, *beta, Tensor::new(&[c], dbeta).unwrap());
                    }
                }
                Op::Relu(x) => {
                    let d = g.zip_map(self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *x, d);
                }
                Op::Sigmoid(x) => {
                    let d = g.zip_map(out.unwrap(), |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let d = g.zip_map(out.unwrap(), |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *x, d);
                }
                Op::Reshape(x) => {
                    let d = g.reshaped(self.shape(*x)).unwrap();
                    accumulate(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.zip_map(self.value(*b), |g, v| g * v));
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.zip_map(self.value(*a), |g, v| g * v));
                    }
                }
                Op::Scale(x, factor) => {
                    accumulate(&mut grads, *x, g.map(|v| v * factor));
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    accumulate(&mut grads, *x, Tensor::full(self.shape(*x), gv));
                }
                Op::Mse(a, b) => {
                    let n = self.value(*a).len().max(1) as f64;
                    let c = 2.0 * g.item() / n;
                    let diff = self.value(*a).zip_map(self.value(*b), |x, y| c * (x - y));
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, diff.map(|v| -v));
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, diff);
                    }
                }
                Op::Bce { p, target } => {
                    let n = self.value(*p).len().max(1) as f64;
                    let c = g.item() / n;
                    let d = self.value(*p).zip_map(self.value(*target), |p, t| {
                        if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                            0.0
                        } else {
                            c * (p - t) / (p * (1.0 - p))
                        }
                    });
                    accumulate(&mut grads, *p, d);
                }
                Op::GatherRows { table, rows } => {
                    let tv = self.value(*table);
                    let d = tv.shape()[1];
                    let mut dt = Tensor::zeros(tv.shape());
                    for (i, r) in rows.iter().enumerate() {
                        for j in 0..d {
                            dt.data_mut()[r * d + j] += g.data()[i * d + j];
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
            }
            grads[idx] = Some(g);
        }

        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *slot = None;
            }
        }
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        for (pid, node) in self.param_nodes.iter().enumerate() {
            if let Some(v) = node {
                param_grads[pid] = grads[v.0].clone();
            }
        }
        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Result of a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a node, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// One gradient per parameter block, zeros where nothing flowed.
    pub fn param_grads(&self, params: &ParamSet) -> Vec<Tensor> {
        params
            .ids()
            .map(|id| {
                self.param(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(params.get(id).shape()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, GradCheckOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn relu_values() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::new(&[2], vec![-1.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn mse_of_equal_inputs_is_zero() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let t = Tensor::new(&[3], vec![0.3, -1.0, 7.0]).unwrap();
        let a = g.input(t.clone());
        let b = g.input(t);
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
    }

    #[test]
    fn mse_gradient_closed_form() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new(&[4], vec![1.0, 2.0, -3.0, 0.5]).unwrap());
        let c = Tensor::new(&[4], vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let mut g = Graph::new(&ps);
        let xv = g.param(x);
        let cv = g.input(c.clone());
        let l = g.mse(xv, cv).unwrap();
        let grads = g.backward(l).unwrap();
        for ((d, xi), ci) in grads
            .param(x)
            .unwrap()
            .data()
            .iter()
            .zip(ps.get(x).data())
            .zip(c.data())
        {
            assert!((d - 2.0 * (xi - ci) / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let mut g = Graph::new(&ps);
        let xv = g.param(x);
        let s = g.stop_gradient(xv);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        assert!(grads.param(x).is_none());
    }

    #[test]
    fn backward_errors() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::zeros(&[3]));
        assert!(matches!(
            g.backward(x),
            Err(AutodiffError::NonScalarLoss(_))
        ));
        assert!(matches!(
            g.backward(Var(99)),
            Err(AutodiffError::UnknownNode(99))
        ));
    }

    #[test]
    fn shape_mismatch_is_descriptive() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let a = g.input(Tensor::zeros(&[2, 3]));
        let w = g.input(Tensor::zeros(&[4, 5]));
        let err = g.linear(a, w, None).unwrap_err().to_string();
        assert!(
            err.contains("linear") && err.contains("[2, 3]") && err.contains("[4, 5]"),
            "{err}"
        );
    }

    #[test]
    fn batchnorm_eval_inverts_with_its_affine_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = ParamSet::new();
        let gamma = ps.add("g", rand_tensor(&[3], &mut rng).map(|v| v + 2.0));
        let beta = ps.add("b", rand_tensor(&[3], &mut rng));
        let mean = [0.1, -0.3, 0.7];
        let var = [0.5, 1.5, 2.0];
        let x = rand_tensor(&[2, 3, 4, 2], &mut rng);
        let mut g = Graph::new(&ps);
        let xv = g.input(x.clone());
        let (gv, bv) = (g.param(gamma), g.param(beta));
        let y = g.batch_norm_eval(xv, gv, bv, &mean, &var, 1e-5).unwrap();
        let yv = g.value(y);
        for (k, (yk, xk)) in yv.data().iter().zip(x.data()).enumerate() {
            let ch = (k / 8) % 3;
            let (gm, bt) = (ps.get(gamma).data()[ch], ps.get(beta).data()[ch]);
            let back = (yk - bt) / gm * (var[ch] + 1e-5f64).sqrt() + mean[ch];
            assert!((back - xk).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = ParamSet::new();
        let w = ps.add("w", rand_tensor(&[3, 4], &mut rng));
        let x = rand_tensor(&[5, 4], &mut rng);
        let t1 = rand_tensor(&[5, 3], &mut rng);
        let t2 = rand_tensor(&[5, 3], &mut rng);
        let grad_of = |targets: &[&Tensor]| {
            let mut g = Graph::new(&ps);
            let xv = g.input(x.clone());
            let wv = g.param(w);
            let y = g.linear(xv, wv, None).unwrap();
            let y = g.tanh(y);
            let mut total = None;
            for t in targets {
                let tv = g.input((*t).clone());
                let l = g.mse(y, tv).unwrap();
                total = Some(match total {
                    None => l,
                    Some(acc) => g.add(acc, l).unwrap(),
                });
            }
            g.backward(total.unwrap())
                .unwrap()
                .param(w)
                .unwrap()
                .clone()
        };
        let both = grad_of(&[&t1, &t2]);
        let a = grad_of(&[&t1]);
        let b = grad_of(&[&t2]);
        for ((s, x), y) in both.data().iter().zip(a.data()).zip(b.data()) {
            assert!((s - (x + y)).abs() < 1e-12);
        }
    }

    fn check(
        tol: f64,
        build: impl Fn(&mut Graph<'_>, &[ParamId]) -> Result<Var, AutodiffError>,
        params: ParamSet,
    ) {
        let ids: Vec<ParamId> = params.ids().collect();
        let report =
            gradient_check(&params, |g| build(g, &ids), &GradCheckOptions::default()).unwrap();
        assert!(report.max_error() < tol, "{report:?}");
    }

    #[test]
    fn gradcheck_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut ps = ParamSet::new();
        ps.add("x", rand_tensor(&[3, 5], &mut rng));
        ps.add("w", rand_tensor(&[4, 5], &mut rng));
        ps.add("b", rand_tensor(&[4], &mut rng));
        let target = rand_tensor(&[3, 4], &mut rng);
        check(
            1e-6,
            |g, p| {
                let (x, w, b) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                let y = g.linear(x, w, Some(b))?;
                let t = g.input(target.clone());
                g.mse(y, t)
            },
            ps,
        );
    }

    #[test]
    fn gradcheck_conv_and_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        ps.add("x", rand_tensor(&[2, 2, 8, 4], &mut rng));
        ps.add("w", rand_tensor(&[3, 2, 4, 4], &mut rng));
        ps.add("b", rand_tensor(&[3], &mut rng));
        ps.add("wt", rand_tensor(&[3, 2, 4, 4], &mut rng));
        ps.add("bt", rand_tensor(&[2], &mut rng));
        let target = rand_tensor(&[2, 2, 8, 4], &mut rng);
        check(
            1e-4,
            |g, p| {
                let x = g.param(p[0]);
                let (w, b, wt, bt) = (g.param(p[1]), g.param(p[2]), g.param(p[3]), g.param(p[4]));
                let h = g.conv2d(x, w, Some(b), 2, 1)?;
                let h = g.tanh(h);
                let y = g.conv_transpose2d(h, wt, Some(bt), 2, 1)?;
                let t = g.input(target.clone());
                g.mse(y, t)
            },
            ps,
        );
    }

    #[test]
    fn gradcheck_batchnorm_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ps = ParamSet::new();
        ps.add("x", rand_tensor(&[4, 3, 2, 2], &mut rng));
        ps.add("g", rand_tensor(&[3], &mut rng));
        ps.add("b", rand_tensor(&[3], &mut rng));
        let target = rand_tensor(&[4, 3, 2, 2], &mut rng);
        check(
            1e-4,
            |g, p| {
                let (x, gm, bt) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                let (y, _) = g.batch_norm_train(x, gm, bt, 1e-5)?;
                let y = g.sigmoid(y);
                let t = g.input(target.clone());
                g.mse(y, t)
            },
            ps,
        );
    }

    #[test]
    fn gradcheck_elementwise_and_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut ps = ParamSet::new();
        ps.add("a", rand_tensor(&[6], &mut rng));
        ps.add("b", rand_tensor(&[6], &mut rng));
        ps.add("table", rand_tensor(&[4, 3], &mut rng));
        let target = Tensor::new(&[6], vec![1.0, 0.0, 1.0, 0.0, 0.3, 0.9]).unwrap();
        check(
            1e-4,
            |g, p| {
                let (a, b, table) = (g.param(p[0]), g.param(p[1]), g.param(p[2]));
                let m = g.mul(a, b)?;
                let s = g.sub(m, b)?;
                let s = g.scale(s, 0.7);
                let r = g.reshape(s, &[2, 3])?;
                let rows = g.gather_rows(table, &[2, 0])?;
                let r2 = g.add(r, rows)?;
                let flat = g.reshape(r2, &[6])?;
                let p = g.sigmoid(flat);
                let t = g.input(target.clone());
                let l1 = g.bce(p, t)?;
                let sq = g.mul(flat, flat)?;
                let l2 = g.sum(sq);
                let l2 = g.scale(l2, 0.1);
                g.add(l1, l2)
            },
            ps,
        );
    }

    #[test]
    fn gradcheck_random_five_layer_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut ps = ParamSet::new();
        let widths = [6, 8, 7, 5, 4, 3];
        for l in 0..5 {
            ps.add(
                format!("w{l}"),
                rand_tensor(&[widths[l + 1], widths[l]], &mut rng),
            );
            ps.add(format!("b{l}"), rand_tensor(&[widths[l + 1]], &mut rng));
        }
        let x = rand_tensor(&[4, 6], &mut rng);
        let target = rand_tensor(&[4, 3], &mut rng);
        check(
            1e-4,
            |g, p| {
                let mut h = g.input(x.clone());
                for l in 0..5 {
                    let (w, b) = (g.param(p[2 * l]), g.param(p[2 * l + 1]));
                    h = g.linear(h, w, Some(b))?;
                    h = if l % 2 == 0 { g.tanh(h) } else { g.sigmoid(h) };
                }
                let t = g.input(target.clone());
                g.mse(h, t)
            },
            ps,
        );
    }

    #[test]
    fn tracked_inputs_receive_gradients() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let x = g.tracked_input(Tensor::new(&[2], vec![1.0, -2.0]).unwrap());
        let c = g.input(Tensor::zeros(&[2]));
        let l = g.mse(x, c).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, -2.0]);
        assert!(grads.wrt(c).is_none());
    }
}
