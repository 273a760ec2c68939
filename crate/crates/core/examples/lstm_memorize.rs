//! Trains the scalar LSTM prior on noisy copies of one latent sequence and
//! compares generated sequences to it.

use latentflow::lstm::{train_lstm, LstmConfig};
use latentflow::seed::{stage_rng, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target = [0.8, -0.3, 0.5, 1.2, -0.9, 0.1, 0.4];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f64>> = (0..128)
        .map(|_| {
            target
                .iter()
                .map(|t| t + rng.random_range(-0.02..0.02))
                .collect()
        })
        .collect();
    let config = LstmConfig {
        hidden: 16,
        epochs: 200,
        batch_size: 16,
        lr: 1e-2,
        ..LstmConfig::default()
    };
    let trained = train_lstm(&rows, &config, 9)?;
    for (e, l) in trained.history.iter().enumerate().step_by(40) {
        println!("epoch {e:3}: teacher-forced loss {l:.5}");
    }
    println!(
        "final loss {:.5}",
        trained.history.last().copied().unwrap_or(f64::NAN)
    );
    let samples = trained
        .params
        .sample(5, target.len(), &mut stage_rng(9, Stage::Sample, 2));
    for s in &samples {
        let err = s
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let shown: Vec<String> = s.iter().map(|v| format!("{v:+.3}")).collect();
        println!("sample [{}] max deviation {err:.3}", shown.join(", "));
    }
    Ok(())
}
