//! Scores three synthetic generators against a reference set and writes the
//! report CSVs and SVG plots to a directory (first argument, default a temp dir).

use latentflow::eval::{
    build_report, write_report, ModelTag, ReportOptions, SampleSet, TsneConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cloud(rng: &mut ChaCha8Rng, n: usize, shift: f64, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..7)
                .map(|_| shift + spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("latentflow_eval_metrics"));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let reference = cloud(&mut rng, 300, 0.0, 1.0);
    let sets = vec![
        SampleSet::new(ModelTag::Qcbm, cloud(&mut rng, 300, 0.0, 1.0)),
        SampleSet::new(ModelTag::Qgan, cloud(&mut rng, 300, 0.3, 1.2)),
        SampleSet::new(ModelTag::Lstm, cloud(&mut rng, 300, 1.0, 0.5)),
    ];
    let opts = ReportOptions {
        tsne: Some(TsneConfig {
            perplexity: 30.0,
            iterations: 400,
            ..TsneConfig::default()
        }),
        ..ReportOptions::default()
    };
    let report = build_report(&sets, &reference, &opts)?;
    for m in &report.models {
        println!(
            "{:5}: avg min distance {:.4}, nearest-neighbour wins {}",
            m.tag, m.avg_min_distance, m.nn_wins
        );
    }
    println!(
        "ties {}; references {}",
        report.nn_ties, report.reference_count
    );
    write_report(&report, &dir)?;
    println!("report written to {}", dir.display());
    Ok(())
}
