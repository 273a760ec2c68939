use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latentflow::pipeline::{
    parse_overrides, Command, Pipeline, PipelineConfig, PipelineError, OUTPUT_ROOT_ENV,
};

/// Flow snapshots to latent codes to generative priors, one stage at a time.
#[derive(Parser)]
#[command(name = "latentflow", version, after_help = format!(
    "Config keys can be overridden as trailing --key=value flags.\nArtifacts go to ${OUTPUT_ROOT_ENV}/<run> (default root: runs)."
))]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// `key = value` config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory, overriding the output root and run name.
    #[arg(long, global = true)]
    dir: Option<PathBuf>,
    /// Suppress progress lines.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the lattice Boltzmann solver and write the snapshot file.
    Simulate(Overrides),
    /// Train the VQ-VAE on the snapshots.
    TrainVqvae(Overrides),
    /// Encode every snapshot into a continuous latent vector.
    Encode(Overrides),
    /// Train one circuit Born machine per latent dimension.
    TrainQcbm(Overrides),
    /// Train the quantum generator against a classical discriminator.
    TrainQgan(Overrides),
    /// Train the autoregressive LSTM prior.
    TrainLstm(Overrides),
    /// Draw latent samples from the three trained priors.
    Sample(Overrides),
    /// Compute distance metrics, PCA and t-SNE against the encoded latents.
    Evaluate(Overrides),
    /// Render SVG plots from the evaluation CSVs.
    Plot(Overrides),
    /// Run every stage in order.
    All(Overrides),
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY=VALUE"
    )]
    set: Vec<String>,
}

fn split(sub: Sub) -> (Command, Vec<String>) {
    match sub {
        Sub::Simulate(o) => (Command::Simulate, o.set),
        Sub::TrainVqvae(o) => (Command::TrainVqvae, o.set),
        Sub::Encode(o) => (Command::Encode, o.set),
        Sub::TrainQcbm(o) => (Command::TrainQcbm, o.set),
        Sub::TrainQgan(o) => (Command::TrainQgan, o.set),
        Sub::TrainLstm(o) => (Command::TrainLstm, o.set),
        Sub::Sample(o) => (Command::Sample, o.set),
        Sub::Evaluate(o) => (Command::Evaluate, o.set),
        Sub::Plot(o) => (Command::Plot, o.set),
        Sub::All(o) => (Command::All, o.set),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (command, mut raw) = split(cli.command);
    let quiet = cli.quiet || raw.iter().any(|a| a == "-q" || a == "--quiet");
    raw.retain(|a| a != "-q" && a != "--quiet");
    let (mut config_path, mut dir) = (cli.config, cli.dir);
    let mut overrides = Vec::new();
    for (k, v) in parse_overrides(&raw)? {
        match k.as_str() {
            "config" => config_path = Some(PathBuf::from(v)),
            "dir" => dir = Some(PathBuf::from(v)),
            _ => overrides.push((k, v)),
        }
    }
    let config = PipelineConfig::load(config_path.as_deref(), &overrides)?;
    let mut pipeline = match dir {
        Some(d) => Pipeline::new(config, d),
        None => Pipeline::in_output_root(config),
    };
    if !quiet {
        pipeline = pipeline.with_log(|m| eprintln!("{m}"));
    }
    pipeline.run(command)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
