use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use super::error::Classify;
use super::io::{
    read_latents_csv, read_samples_csv, read_snapshots, write_latents_csv, write_samples_csv,
    write_snapshots,
};
use super::{PipelineConfig, PipelineError, RunManifest, SnapshotSet, StageRecord};
use crate::autodiff::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::eval::{
    build_report, render_plots, write_report_csvs, ModelTag, ReportOptions, SampleSet, TsneConfig,
};
use crate::lbm::collect_snapshots_with;
use crate::lstm::{train_lstm, LstmParams};
use crate::qcbm::{train_qcbm, QcbmModel};
use crate::qgan::{train_qgan, QganModel};
use crate::seed::{stage_rng, Stage};
use crate::vqvae::VqVae;

/// File names inside a run directory.
pub mod artifacts {
    pub const SNAPSHOTS: &str = "snapshots.flq";
    pub const VQVAE: &str = "vqvae.flp";
    pub const VQVAE_LOSS: &str = "vqvae_loss.csv";
    pub const LATENTS: &str = "latents.csv";
    pub const QCBM: &str = "qcbm.flp";
    pub const QCBM_LOSS: &str = "qcbm_loss.csv";
    pub const QGAN: &str = "qgan.flp";
    pub const QGAN_LOSS: &str = "qgan_loss.csv";
    pub const LSTM: &str = "lstm.flp";
    pub const LSTM_LOSS: &str = "lstm_loss.csv";
    pub const REPORT_DIR: &str = "report";
    pub const METRICS: &str = "report/metrics.csv";
    pub const MANIFEST: &str = "manifest.json";

    pub fn samples(model: &str) -> String {
        format!("samples_{model}.csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    TrainVqvae,
    Encode,
    TrainQcbm,
    TrainQgan,
    TrainLstm,
    Sample,
    Evaluate,
    Plot,
    All,
}

impl Command {
    /// Every stage in execution order.
    pub const CHAIN: [Command; 9] = [
        Command::Simulate,
        Command::TrainVqvae,
        Command::Encode,
        Command::TrainQcbm,
        Command::TrainQgan,
        Command::TrainLstm,
        Command::Sample,
        Command::Evaluate,
        Command::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::TrainVqvae => "train-vqvae",
            Command::Encode => "encode",
            Command::TrainQcbm => "train-qcbm",
            Command::TrainQgan => "train-qgan",
            Command::TrainLstm => "train-lstm",
            Command::Sample => "sample",
            Command::Evaluate => "evaluate",
            Command::Plot => "plot",
            Command::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::CHAIN
            .into_iter()
            .chain([Command::All])
            .find(|c| c.name() == s)
    }
}

const MODELS: [(ModelTag, &str); 3] = [
    (ModelTag::Qcbm, artifacts::QCBM),
    (ModelTag::Qgan, artifacts::QGAN),
    (ModelTag::Lstm, artifacts::LSTM),
];

pub struct Pipeline {
    pub config: PipelineConfig,
    pub dir: PathBuf,
    /// Progress lines go here; `None` keeps the pipeline silent.
    pub log: Option<Box<dyn Fn(&str) + Send + Sync>>,
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig, dir: impl Into<PathBuf>) -> Self {
        Pipeline {
            config,
            dir: dir.into(),
            log: None,
        }
    }

    /// Run directory under the output root.
    pub fn in_output_root(config: PipelineConfig) -> Self {
        let dir = super::output_root().join(&config.run);
        Self::new(config, dir)
    }

    pub fn with_log(mut self, f: impl Fn(&str) + Send + Sync + 'static) -> Self {
        self.log = Some(Box::new(f));
        self
    }

    fn say(&self, msg: &str) {
        if let Some(f) = &self.log {
            f(msg)
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Executes `cmd` (the whole chain for `All`) on a pool of `workers` threads.
    pub fn run(&self, cmd: Command) -> Result<()> {
        self.config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Stage {
                stage: "setup",
                detail: e.to_string(),
            })?;
        pool.install(|| {
            fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
            let chain: Vec<Command> = if cmd == Command::All {
                Command::CHAIN.to_vec()
            } else {
                vec![cmd]
            };
            for c in chain {
                self.run_stage(c)?;
            }
            Ok(())
        })
    }

    fn run_stage(&self, cmd: Command) -> Result<()> {
        self.say(&format!("[{}] start", cmd.name()));
        let t0 = Instant::now();
        let written = match cmd {
            Command::Simulate => self.simulate(),
            Command::TrainVqvae => self.train_vqvae(),
            Command::Encode => self.encode(),
            Command::TrainQcbm => self.train_qcbm(),
            Command::TrainQgan => self.train_qgan(),
            Command::TrainLstm => self.train_lstm(),
            Command::Sample => self.sample(),
            Command::Evaluate => self.evaluate(),
            Command::Plot => self.plot(),
            Command::All => unreachable!("expanded by run"),
        }?;
        let seconds = t0.elapsed().as_secs_f64();
        self.say(&format!("[{}] done in {seconds:.1} s", cmd.name()));
        let path = self.path(artifacts::MANIFEST);
        let mut m = RunManifest::load_or_new(&path, &self.config, rayon::current_num_threads());
        m.stages.push(StageRecord {
            stage: cmd.name().into(),
            seconds,
            artifacts: written
                .iter()
                .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
                .collect(),
        });
        fs::write(&path, m.to_json()).map_err(io_err(&path))
    }

    fn require(&self, stage: &'static str, name: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Prerequisite {
                stage,
                producer,
                missing: p,
                reason: "file not found".into(),
            })
        }
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, body).map_err(io_err(&p))?;
        Ok(p)
    }

    fn save_checkpoint(&self, name: &str, c: &Checkpoint, stage: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
        write_checkpoint(&mut w, c).map_err(|e| e.at(stage))?;
        w.flush().map_err(io_err(&p))?;
        Ok(p)
    }

    fn load_checkpoint(
        &self,
        stage: &'static str,
        name: &str,
        producer: &'static str,
    ) -> Result<Checkpoint> {
        let p = self.require(stage, name, producer)?;
        let mut r = BufReader::new(File::open(&p).map_err(io_err(&p))?);
        read_checkpoint(&mut r).map_err(|e| PipelineError::Prerequisite {
            stage,
            producer,
            missing: p.clone(),
            reason: format!("unreadable checkpoint: {e}"),
        })
    }

    fn load_snapshots(&self, stage: &'static str) -> Result<SnapshotSet> {
        let p = self.require(stage, artifacts::SNAPSHOTS, "simulate")?;
        let mut r = BufReader::new(File::open(&p).map_err(io_err(&p))?);
        let s = read_snapshots(&mut r).map_err(|e| PipelineError::Prerequisite {
            stage,
            producer: "simulate",
            missing: p.clone(),
            reason: e.to_string(),
        })?;
        if (s.nx, s.ny) != (self.config.nx, self.config.ny) {
            return Err(PipelineError::Prerequisite {
                stage,
                producer: "simulate",
                missing: p,
                reason: format!(
                    "file holds {}x{} frames but the config asks for {}x{}",
                    s.nx, s.ny, self.config.nx, self.config.ny
                ),
            });
        }
        Ok(s)
    }

    fn load_latents(&self, stage: &'static str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let p = self.require(stage, artifacts::LATENTS, "encode")?;
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let (z, codes) = read_latents_csv(&text, artifacts::LATENTS).map_err(|e| {
            PipelineError::Prerequisite {
                stage,
                producer: "encode",
                missing: p.clone(),
                reason: e.to_string(),
            }
        })?;
        if z.is_empty() {
            return Err(PipelineError::Prerequisite {
                stage,
                producer: "encode",
                missing: p,
                reason: "no latent rows".into(),
            });
        }
        Ok((z, codes))
    }

    fn simulate(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "simulate";
        let lattice = self.config.lattice()?;
        let schedule = self.config.schedule();
        let (nx, ny) = (self.config.nx, self.config.ny);
        let mut set = SnapshotSet {
            nx,
            ny,
            data: Vec::with_capacity(schedule.count * nx * ny),
        };
        collect_snapshots_with(&lattice, schedule, |s| {
            set.data.extend(s.omega.iter().map(|&v| v as f32))
        })
        .map_err(|e| e.at(S))?;
        if set.data.iter().any(|v| !v.is_finite()) {
            return Err(PipelineError::Numerical {
                stage: S,
                detail: "non-finite vorticity in snapshots".into(),
            });
        }
        let p = self.path(artifacts::SNAPSHOTS);
        let mut w = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
        write_snapshots(&mut w, &set).map_err(|e| e.at(S))?;
        w.flush().map_err(io_err(&p))?;
        self.say(&format!(
            "[{S}] {} frames of {nx}x{ny}, tau = {:.6}",
            set.count(),
            lattice.tau
        ));
        Ok(vec![p])
    }

    fn train_vqvae(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "train-vqvae";
        let images = self.load_snapshots(S)?.to_f64();
        let seed = self.config.seed;
        let mut model = VqVae::new(self.config.vqvae(), &mut stage_rng(seed, Stage::VqVae, 0))
            .map_err(|e| e.at(S))?;
        let history = model
            .train(&images, &mut stage_rng(seed, Stage::VqVae, 1))
            .map_err(|e| e.at(S))?;
        let mut csv = String::from("epoch,total,reconstruction,codebook,commitment\n");
        for (i, h) in history.iter().enumerate() {
            csv.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                i + 1,
                h.total,
                h.reconstruction,
                h.codebook,
                h.commitment
            ));
        }
        if let Some(last) = history.last() {
            self.say(&format!(
                "[{S}] final loss {:.6} (reconstruction {:.6})",
                last.total, last.reconstruction
            ));
        }
        Ok(vec![
            self.save_checkpoint(artifacts::VQVAE, &model.to_checkpoint(), S)?,
            self.write(artifacts::VQVAE_LOSS, &csv)?,
        ])
    }

    fn encode(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "encode";
        let images = self.load_snapshots(S)?.to_f64();
        let ck = self.load_checkpoint(S, artifacts::VQVAE, "train-vqvae")?;
        let model = VqVae::from_checkpoint(&ck).map_err(|e| e.at(S))?;
        let table = model.encode_dataset(&images).map_err(|e| e.at(S))?;
        let used = {
            let mut u = table.indices.clone();
            u.sort_unstable();
            u.dedup();
            u.len()
        };
        self.say(&format!(
            "[{S}] {} latents, {used} distinct codewords",
            table.z.len()
        ));
        Ok(vec![self.write(
            artifacts::LATENTS,
            &write_latents_csv(&table.z, &table.indices),
        )?])
    }

    fn train_qcbm(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "train-qcbm";
        let (z, _) = self.load_latents(S)?;
        let columns: Vec<Vec<f64>> = (0..z[0].len())
            .map(|d| z.iter().map(|r| r[d]).collect())
            .collect();
        let t = train_qcbm(&columns, &self.config.qcbm(), self.config.seed).map_err(|e| e.at(S))?;
        let mut csv = String::from("iteration");
        (0..columns.len()).for_each(|d| csv.push_str(&format!(",dim{d}")));
        csv.push('\n');
        let iters = t.histories.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..=iters {
            csv.push_str(&i.to_string());
            for (d, h) in t.histories.iter().enumerate() {
                let v = if i < h.len() { h[i] } else { t.final_mmd2[d] };
                csv.push_str(&format!(",{v:.16e}"));
            }
            csv.push('\n');
        }
        self.say(&format!(
            "[{S}] final MMD² per dimension {:?}",
            t.final_mmd2
        ));
        Ok(vec![
            self.save_checkpoint(artifacts::QCBM, &t.model.to_checkpoint(), S)?,
            self.write(artifacts::QCBM_LOSS, &csv)?,
        ])
    }

    fn train_qgan(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "train-qgan";
        let (z, _) = self.load_latents(S)?;
        let t = train_qgan(&z, &self.config.qgan(), self.config.seed).map_err(|e| e.at(S))?;
        let mut csv = String::from("batch,d_loss,g_loss,d_real_mean,d_fake_mean\n");
        for (i, r) in t.reports.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.d_loss, r.g_loss, r.d_real_mean, r.d_fake_mean
            ));
        }
        Ok(vec![
            self.save_checkpoint(artifacts::QGAN, &t.model.to_checkpoint(), S)?,
            self.write(artifacts::QGAN_LOSS, &csv)?,
        ])
    }

    fn train_lstm(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "train-lstm";
        let (z, _) = self.load_latents(S)?;
        let t = train_lstm(&z, &self.config.lstm(), self.config.seed).map_err(|e| e.at(S))?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in t.history.iter().enumerate() {
            csv.push_str(&format!("{},{l:.16e}\n", i + 1));
        }
        if let Some(l) = t.history.last() {
            self.say(&format!("[{S}] final teacher-forced loss {l:.6}"));
        }
        Ok(vec![
            self.save_checkpoint(artifacts::LSTM, &t.params.to_checkpoint(z[0].len()), S)?,
            self.write(artifacts::LSTM_LOSS, &csv)?,
        ])
    }

    fn sample(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "sample";
        let (z, _) = self.load_latents(S)?;
        let count = if self.config.samples == 0 {
            z.len()
        } else {
            self.config.samples
        };
        let checkpoints: Vec<Checkpoint> = MODELS
            .iter()
            .map(|(tag, file)| {
                let producer = match tag {
                    ModelTag::Qcbm => "train-qcbm",
                    ModelTag::Qgan => "train-qgan",
                    ModelTag::Lstm => "train-lstm",
                };
                self.load_checkpoint(S, file, producer)
            })
            .collect::<Result<_>>()?;
        let mut written = Vec::new();
        for (k, ((tag, _), ck)) in MODELS.iter().zip(&checkpoints).enumerate() {
            let mut rng = stage_rng(self.config.seed, Stage::Sample, k as u32);
            let rows = match tag {
                ModelTag::Qcbm => QcbmModel::from_checkpoint(ck)
                    .and_then(|m| m.sample(count, &mut rng))
                    .map_err(|e| e.at(S))?,
                ModelTag::Qgan => QganModel::from_checkpoint(ck)
                    .and_then(|m| m.sample(count, &mut rng))
                    .map_err(|e| e.at(S))?,
                ModelTag::Lstm => {
                    let (m, steps) = LstmParams::from_checkpoint(ck).map_err(|e| e.at(S))?;
                    m.sample(count, steps, &mut rng)
                }
            };
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(PipelineError::Numerical {
                    stage: S,
                    detail: format!("{tag} produced non-finite samples"),
                });
            }
            written.push(self.write(&artifacts::samples(tag.as_str()), &write_samples_csv(&rows))?);
        }
        Ok(written)
    }

    fn evaluate(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "evaluate";
        let (reference, _) = self.load_latents(S)?;
        let mut sets = Vec::new();
        for (tag, _) in MODELS {
            let name = artifacts::samples(tag.as_str());
            let p = self.require(S, &name, "sample")?;
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            let rows = read_samples_csv(&text, &name).map_err(|e| PipelineError::Prerequisite {
                stage: S,
                producer: "sample",
                missing: p.clone(),
                reason: e.to_string(),
            })?;
            sets.push(SampleSet::new(tag, rows));
        }
        let tsne_seed: u64 = stage_rng(self.config.seed, Stage::Evaluate, 0).random();
        let opts = ReportOptions {
            pca_components: self.config.pca_components,
            tsne: self.config.tsne.then(|| TsneConfig {
                perplexity: self.config.perplexity,
                iterations: self.config.tsne_iterations,
                seed: tsne_seed,
                ..TsneConfig::default()
            }),
        };
        let report = build_report(&sets, &reference, &opts).map_err(|e| e.at(S))?;
        if let Some(w) = &report.pca.warning {
            self.say(&format!("[{S}] warning: {w}"));
        }
        for m in &report.models {
            self.say(&format!(
                "[{S}] {}: avg min distance {:.4}, nearest-neighbour wins {}/{}",
                m.tag, m.avg_min_distance, m.nn_wins, report.reference_count
            ));
        }
        write_report_csvs(&report, &self.path(artifacts::REPORT_DIR)).map_err(|e| e.at(S))
    }

    fn plot(&self) -> Result<Vec<PathBuf>> {
        const S: &str = "plot";
        self.require(S, artifacts::METRICS, "evaluate")?;
        render_plots(&self.path(artifacts::REPORT_DIR)).map_err(|e| e.at(S))
    }
}
