//! Embeds three Gaussian clusters in 10 dimensions with exact t-SNE and
//! writes the embedding as an SVG scatter plot.

use latentflow::eval::{scatter_chart, tsne_embed, Series, TsneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (per, dims) = (100, 10);
    let rows: Vec<Vec<f64>> = (0..3 * per)
        .map(|i| {
            (0..dims)
                .map(
                    |k| if k == i / per { 6.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal),
                )
                .collect()
        })
        .collect();
    let result = tsne_embed(
        &rows,
        &TsneConfig {
            perplexity: 30.0,
            ..TsneConfig::default()
        },
    )?;
    for (it, kl) in &result.kl_history {
        println!("iteration {it:4}: KL {kl:.4}");
    }
    let centroid = |c: usize| {
        let pts = &result.coords[c * per..(c + 1) * per];
        let n = per as f64;
        [
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        ]
    };
    let spread = |c: usize| {
        let m = centroid(c);
        let pts = &result.coords[c * per..(c + 1) * per];
        (pts.iter()
            .map(|p| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2))
            .sum::<f64>()
            / per as f64)
            .sqrt()
    };
    for c in 0..3 {
        let m = centroid(c);
        println!(
            "cluster {c}: centroid ({:.2}, {:.2}) rms radius {:.2}",
            m[0],
            m[1],
            spread(c)
        );
    }
    let series: Vec<Series> = (0..3)
        .map(|c| Series {
            label: format!("cluster {c}"),
            points: result.coords[c * per..(c + 1) * per]
                .iter()
                .map(|p| (p[0], p[1]))
                .collect(),
        })
        .collect();
    let path = std::env::temp_dir().join("latentflow_tsne_clusters.svg");
    std::fs::write(
        &path,
        scatter_chart("t-SNE of three clusters", "t-SNE 1", "t-SNE 2", &series),
    )?;
    println!("plot written to {}", path.display());
    Ok(())
}
