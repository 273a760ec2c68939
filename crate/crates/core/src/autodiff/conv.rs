//! 2D convolution kernels on `[N, C, H, W]` tensors via im2col + GEMM.

use super::linalg::gemm;
use super::{AutodiffError, Tensor};

/// Square-kernel convolution geometry between an image and its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Geometry of a forward convolution over a `channels x h x w` image.
    pub fn forward(
        channels: usize,
        h: usize,
        w: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if stride == 0 || h + 2 * pad < kernel || w + 2 * pad < kernel {
            return None;
        }
        Some(Self {
            channels,
            h,
            w,
            kernel,
            stride,
            pad,
            out_h: (h + 2 * pad - kernel) / stride + 1,
            out_w: (w + 2 * pad - kernel) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col(img: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let ncol = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut cols[((c * k + ki) * k + kj) * ncol..][..ncol];
                for oh in 0..g.out_h {
                    let ih = (oh * s) as isize - p + ki as isize;
                    let out = &mut row[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, o) in out.iter_mut().enumerate() {
                        let iw = (ow * s) as isize - p + kj as isize;
                        *o = if iw < 0 || iw >= g.w as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeometry, img: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let ncol = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &cols[((c * k + ki) * k + kj) * ncol..][..ncol];
                for oh in 0..g.out_h {
                    let ih = (oh * s) as isize - p + ki as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, v) in row[oh * g.out_w..(oh + 1) * g.out_w].iter().enumerate() {
                        let iw = (ow * s) as isize - p + kj as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn dims4(t: &Tensor, op: &'static str) -> Result<[usize; 4], AutodiffError> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(AutodiffError::shape(
            op,
            format!("expected a rank-4 tensor, got {s:?}"),
        )),
    }
}

fn check_bias(
    bias: Option<&Tensor>,
    channels: usize,
    op: &'static str,
) -> Result<(), AutodiffError> {
    match bias {
        Some(b) if b.len() != channels => Err(AutodiffError::shape(
            op,
            format!(
                "bias has {} entries for {channels} output channels",
                b.len()
            ),
        )),
        _ => Ok(()),
    }
}

/// Validated shapes for a conv2d call: input geometry and output channels.
pub(crate) fn conv2d_geometry(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<(ConvGeometry, usize, usize), AutodiffError> {
    let [n, c, h, wd] = dims4(x, "conv2d")?;
    let [o, wc, kh, kw] = dims4(w, "conv2d")?;
    if wc != c || kh != kw {
        return Err(AutodiffError::shape(
            "conv2d",
            format!("input {:?} with kernel {:?}", x.shape(), w.shape()),
        ));
    }
    check_bias(bias, o, "conv2d")?;
    let g = ConvGeometry::forward(c, h, wd, kh, stride, pad).ok_or_else(|| {
        AutodiffError::shape(
            "conv2d",
            format!("kernel {kh} does not fit input {:?}", x.shape()),
        )
    })?;
    Ok((g, n, o))
}

/// `[N, C, H, W]` conv `[O, C, k, k]` -> `[N, O, H', W']`.
pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor, AutodiffError> {
    let (g, n, o) = conv2d_geometry(x, w, bias, stride, pad)?;
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let mut cols = vec![0.0; rows * ncol];
    let mut out = Tensor::zeros(&[n, o, g.out_h, g.out_w]);
    let in_size = g.channels * g.h * g.w;
    for s in 0..n {
        im2col(&x.data()[s * in_size..(s + 1) * in_size], &g, &mut cols);
        let dst = &mut out.data_mut()[s * o * ncol..(s + 1) * o * ncol];
        if let Some(b) = bias {
            for (oc, chunk) in dst.chunks_mut(ncol).enumerate() {
                chunk.fill(b.data()[oc]);
            }
        }
        gemm(
            o,
            rows,
            ncol,
            w.data(),
            false,
            &cols,
            false,
            if bias.is_some() { 1.0 } else { 0.0 },
            dst,
        );
    }
    Ok(out)
}

/// Gradients of conv2d with respect to input (if asked), kernel and bias.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    g: &ConvGeometry,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let n = x.shape()[0];
    let o = w.shape()[0];
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let in_size = g.channels * g.h * g.w;
    let mut cols = vec![0.0; rows * ncol];
    let mut dcols = vec![0.0; rows * ncol];
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[o]);
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    for s in 0..n {
        let dy = &dout.data()[s * o * ncol..(s + 1) * o * ncol];
        for (oc, chunk) in dy.chunks(ncol).enumerate() {
            db.data_mut()[oc] += chunk.iter().sum::<f64>();
        }
        im2col(&x.data()[s * in_size..(s + 1) * in_size], g, &mut cols);
        gemm(o, ncol, rows, dy, false, &cols, true, 1.0, dw.data_mut());
        if let Some(dx) = dx.as_mut() {
            gemm(rows, o, ncol, w.data(), true, dy, false, 0.0, &mut dcols);
            col2im(
                &dcols,
                g,
                &mut dx.data_mut()[s * in_size..(s + 1) * in_size],
            );
        }
    }
    (dx, dw, db)
}

/// Output geometry of a transposed convolution: the returned geometry
/// describes the *output* image, whose forward conv would land on the input.
pub(crate) fn conv_transpose2d_geometry(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<(ConvGeometry, usize, usize), AutodiffError> {
    let [n, c, h, wd] = dims4(x, "conv_transpose2d")?;
    let [wc, o, kh, kw] = dims4(w, "conv_transpose2d")?;
    if wc != c || kh != kw || stride == 0 {
        return Err(AutodiffError::shape(
            "conv_transpose2d",
            format!("input {:?} with kernel {:?}", x.shape(), w.shape()),
        ));
    }
    check_bias(bias, o, "conv_transpose2d")?;
    let oh = ((h - 1) * stride + kh).checked_sub(2 * pad);
    let ow = ((wd - 1) * stride + kh).checked_sub(2 * pad);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(AutodiffError::shape(
            "conv_transpose2d",
            "padding larger than output",
        ));
    };
    let g = ConvGeometry {
        channels: o,
        h: oh,
        w: ow,
        kernel: kh,
        stride,
        pad,
        out_h: h,
        out_w: wd,
    };
    Ok((g, n, c))
}

/// `[N, Cin, H, W]` with kernel `[Cin, Cout, k, k]` -> `[N, Cout, H', W']`,
/// `H' = (H - 1) * stride - 2 * pad + k`.
pub fn conv_transpose2d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor, AutodiffError> {
    let (g, n, cin) = conv_transpose2d_geometry(x, w, bias, stride, pad)?;
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let out_size = g.channels * g.h * g.w;
    let mut cols = vec![0.0; rows * ncol];
    let mut out = Tensor::zeros(&[n, g.channels, g.h, g.w]);
    for s in 0..n {
        let xs = &x.data()[s * cin * ncol..(s + 1) * cin * ncol];
        gemm(rows, cin, ncol, w.data(), true, xs, false, 0.0, &mut cols);
        let dst = &mut out.data_mut()[s * out_size..(s + 1) * out_size];
        if let Some(b) = bias {
            for (oc, chunk) in dst.chunks_mut(g.h * g.w).enumerate() {
                chunk.fill(b.data()[oc]);
            }
        }
        col2im(&cols, &g, dst);
    }
    Ok(out)
}

pub(crate) fn conv_transpose2d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    g: &ConvGeometry,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let n = x.shape()[0];
    let cin = x.shape()[1];
    let (rows, ncol) = (g.col_rows(), g.col_cols());
    let out_size = g.channels * g.h * g.w;
    let mut cols = vec![0.0; rows * ncol];
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[g.channels]);
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    for s in 0..n {
        let dy = &dout.data()[s * out_size..(s + 1) * out_size];
        for (oc, chunk) in dy.chunks(g.h * g.w).enumerate() {
            db.data_mut()[oc] += chunk.iter().sum::<f64>();
        }
        im2col(dy, g, &mut cols);
        let xs = &x.data()[s * cin * ncol..(s + 1) * cin * ncol];
        gemm(cin, ncol, rows, xs, false, &cols, true, 1.0, dw.data_mut());
        if let Some(dx) = dx.as_mut() {
            let dst = &mut dx.data_mut()[s * cin * ncol..(s + 1) * cin * ncol];
            gemm(cin, rows, ncol, w.data(), false, &cols, false, 0.0, dst);
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct six-loop convolution.
    fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let [n, c, h, wd] = dims4(x, "").unwrap();
        let [o, _, k, _] = dims4(w, "").unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[n, o, oh, ow]);
        for s in 0..n {
            for oc in 0..o {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = 0.0;
                        for ic in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let ih = (i * stride + ki) as isize - pad as isize;
                                    let iw = (j * stride + kj) as isize - pad as isize;
                                    if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < wd
                                    {
                                        acc += x.data()
                                            [((s * c + ic) * h + ih as usize) * wd + iw as usize]
                                            * w.data()[((oc * c + ic) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((s * o + oc) * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 3, 5, 4], &mut rng);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(conv2d_forward(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 3, 8, 6], &mut rng);
        let w = random(&[4, 3, 4, 4], &mut rng);
        let got = conv2d_forward(&x, &w, None, 2, 1).unwrap();
        let want = naive_conv(&x, &w, 2, 1);
        assert_eq!(got.shape(), &[2, 4, 4, 3]);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn input_gradient_is_the_transposed_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 3, 8, 6], &mut rng);
        let w = random(&[5, 3, 4, 4], &mut rng);
        let (g, _, _) = conv2d_geometry(&x, &w, None, 2, 1).unwrap();
        let dout = random(&[2, 5, g.out_h, g.out_w], &mut rng);
        let (dx, _, _) = conv2d_backward(&x, &w, &dout, &g, true);
        let t = conv_transpose2d_forward(&dout, &w, None, 2, 1).unwrap();
        assert_eq!(t.shape(), x.shape());
        for (a, b) in dx.unwrap().data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_inner_product_identity() {
        // <conv(x), y> == <x, conv_transpose(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[1, 2, 16, 4], &mut rng);
        let w = random(&[3, 2, 4, 4], &mut rng);
        let y = random(&[1, 3, 8, 2], &mut rng);
        let cx = conv2d_forward(&x, &w, None, 2, 1).unwrap();
        let ty = conv_transpose2d_forward(&y, &w, None, 2, 1).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn stride_two_halves_and_transpose_doubles() {
        let x = Tensor::zeros(&[1, 1, 64, 16]);
        let w = Tensor::zeros(&[2, 1, 4, 4]);
        assert_eq!(
            conv2d_forward(&x, &w, None, 2, 1).unwrap().shape(),
            &[1, 2, 32, 8]
        );
        let wt = Tensor::zeros(&[1, 2, 4, 4]);
        assert_eq!(
            conv_transpose2d_forward(&x, &wt, None, 2, 1)
                .unwrap()
                .shape(),
            &[1, 2, 128, 32]
        );
    }

    #[test]
    fn shape_errors_name_the_op() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d_forward(&x, &w, None, 1, 0).unwrap_err();
        assert!(err.to_string().contains("conv2d"), "{err}");
    }
}
