//! Adversarial training of the hybrid quantum generator on correlated
//! two-dimensional data, followed by sampling and moment comparison.

use latentflow::qgan::{train_qgan, QganConfig};
use latentflow::seed::{stage_rng, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn moments(rows: &[Vec<f64>], d: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mu = rows.iter().map(|r| r[d]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[d] - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..256)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            vec![2.0 + a, -1.0 + 0.5 * (a + b)]
        })
        .collect();
    let config = QganConfig {
        hidden: [32, 16],
        epochs: 3,
        batch_size: 16,
        ..QganConfig::default()
    };
    let trained = train_qgan(&rows, &config, 3)?;
    for (i, r) in trained.reports.iter().enumerate().step_by(8) {
        println!(
            "batch {i:3}: D loss {:.4} G loss {:.4} D(real) {:.3} D(fake) {:.3}",
            r.d_loss, r.g_loss, r.d_real_mean, r.d_fake_mean
        );
    }
    let samples = trained
        .model
        .sample(1000, &mut stage_rng(3, Stage::Sample, 1))?;
    for d in 0..2 {
        let (dm, ds) = moments(&rows, d);
        let (sm, ss) = moments(&samples, d);
        println!("dim {d}: data mean {dm:.3} std {ds:.3}; samples mean {sm:.3} std {ss:.3}");
    }
    Ok(())
}
