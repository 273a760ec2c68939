//! Trains a small VQ-VAE on a family of shifted wave images and reports
//! per-epoch losses, codebook usage and reconstruction error.

use latentflow::seed::{stage_rng, Stage};
use latentflow::vqvae::{quantize, VqVae, VqVaeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (h, w, n) = (16, 64, 48);
    let mut images = Vec::with_capacity(n * h * w);
    for k in 0..n {
        let phase = k as f64 / n as f64 * std::f64::consts::TAU;
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64 / w as f64, y as f64 / h as f64);
                images.push(
                    (6.0 * xf * std::f64::consts::TAU / 2.0 + phase).sin()
                        * (yf * std::f64::consts::PI).sin(),
                );
            }
        }
    }
    let config = VqVaeConfig {
        height: h,
        width: w,
        channels: [4, 8, 8, 16],
        hidden: 32,
        latent_dim: 4,
        codebook_size: 16,
        epochs: 60,
        batch_size: 8,
        lr: 1e-3,
        ..VqVaeConfig::default()
    };
    let mut model = VqVae::new(config, &mut stage_rng(1, Stage::VqVae, 0))?;
    let history = model.train(&images, &mut stage_rng(1, Stage::VqVae, 1))?;
    for (e, l) in history
        .iter()
        .enumerate()
        .filter(|(e, _)| e % 5 == 0 || *e + 1 == history.len())
    {
        println!(
            "epoch {e:3}: total {:.4} reconstruction {:.4} codebook {:.4} commitment {:.4}",
            l.total, l.reconstruction, l.codebook, l.commitment
        );
    }
    let z = model.encode(&images)?;
    let codes: Vec<usize> = z.iter().map(|r| quantize(r, model.codebook()).0).collect();
    let d = model.config.latent_dim;
    let book = model.codebook().data();
    let quantized: Vec<Vec<f64>> = codes.iter().map(|&c| book[c * d..(c + 1) * d].to_vec()).collect();
    let recon = model.decode(&quantized)?;
    let mut used = codes.clone();
    used.sort_unstable();
    used.dedup();
    let mse = images
        .iter()
        .zip(&recon)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / images.len() as f64;
    let var = images.iter().map(|v| v * v).sum::<f64>() / images.len() as f64;
    println!(
        "codewords in use: {} of {}",
        used.len(),
        model.config.codebook_size
    );
    println!("reconstruction mse {mse:.4} (signal power {var:.4})");
    Ok(())
}
