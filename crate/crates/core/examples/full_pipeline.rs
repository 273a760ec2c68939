//! Runs every stage on a profile file (first argument, default the tiny test
//! profile) into a directory (second argument, default a temp dir) and prints
//! the resulting metrics table.

use std::path::PathBuf;

use latentflow::pipeline::{artifacts, Command, Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let profile = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.conf"));
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("latentflow_full_pipeline"));
    let config = PipelineConfig::load(Some(&profile), &[])?;
    Pipeline::new(config, &dir).run(Command::All)?;
    print!("{}", std::fs::read_to_string(dir.join(artifacts::METRICS))?);
    println!("artifacts in {}", dir.display());
    Ok(())
}
