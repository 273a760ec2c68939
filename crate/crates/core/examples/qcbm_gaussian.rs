//! Fits an 8-qubit Born machine to a bimodal latent column and prints the MMD
//! trajectory and the total-variation distance to the binned target.

use latentflow::qcbm::{train_dimension, GaussianBinner, MmdKernel, QcbmConfig};
use latentflow::qsim::LayeredAnsatz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<f64> = (0..2000)
        .map(|i| {
            let centre = if i % 3 == 0 { -1.5 } else { 1.0 };
            centre + 0.4 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let binner = GaussianBinner::fit(&values)?;
    let q = binner.target_distribution(&values)?;
    let cfg = QcbmConfig {
        iters: 150,
        ..QcbmConfig::default()
    };
    let kernel = MmdKernel::new(&cfg.bandwidths);
    let fit = train_dimension(&q, &kernel, &cfg, &mut rng)?;
    for (i, m) in fit.history.iter().enumerate().step_by(25) {
        println!("iteration {i:3}: MMD² {m:.4e}");
    }
    println!("final MMD² {:.4e}", fit.final_mmd2);
    let p = LayeredAnsatz::new(cfg.n_qubits, cfg.n_layers)?.probabilities(&fit.angles)?;
    let reps = binner.representatives();
    let moment = |w: &[f64]| {
        let m = w.iter().zip(&reps).map(|(a, v)| a * v).sum::<f64>();
        let s = w.iter().zip(&reps).map(|(a, v)| a * (v - m).powi(2)).sum::<f64>();
        (m, s.sqrt())
    };
    let ((mt, st), (mm, sm)) = (moment(&q), moment(&p));
    let left = |w: &[f64]| w.iter().zip(&reps).filter(|(_, v)| **v < -0.25).map(|(a, _)| a).sum::<f64>();
    println!("target mean {mt:.3} std {st:.3} left-mode mass {:.3}", left(&q));
    println!("model  mean {mm:.3} std {sm:.3} left-mode mass {:.3}", left(&p));
    Ok(())
}
