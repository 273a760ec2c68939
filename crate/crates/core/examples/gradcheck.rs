//! Central-difference gradient check of a small conv, batchnorm and linear
//! network built on the reverse-mode graph.

use latentflow::autodiff::{gradient_check, GradCheckOptions, Graph, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let mut ps = ParamSet::new();
    let x = ps.add("x", t(&[4, 1, 8, 8]));
    let w = ps.add("conv.w", t(&[3, 1, 4, 4]));
    let gamma = ps.add("bn.gamma", t(&[3]));
    let beta = ps.add("bn.beta", t(&[3]));
    let fc = ps.add("fc.w", t(&[2, 48]));
    let fb = ps.add("fc.b", t(&[2]));
    let target = t(&[4, 2]);
    let report = gradient_check(
        &ps,
        |g: &mut Graph<'_>| {
            let (xv, wv) = (g.param(x), g.param(w));
            let h = g.conv2d(xv, wv, None, 2, 1)?;
            let (gv, bv) = (g.param(gamma), g.param(beta));
            let (h, _) = g.batch_norm_train(h, gv, bv, 1e-5)?;
            let h = g.tanh(h);
            let h = g.reshape(h, &[4, 48])?;
            let (fw, fbv) = (g.param(fc), g.param(fb));
            let y = g.linear(h, fw, Some(fbv))?;
            let y = g.sigmoid(y);
            let tv = g.input(target.clone());
            g.bce(y, tv)
        },
        &GradCheckOptions::default(),
    )?;
    for b in &report.blocks {
        println!("{b:?}");
    }
    println!("max relative error {:.3e}", report.max_error());
    Ok(())
}
