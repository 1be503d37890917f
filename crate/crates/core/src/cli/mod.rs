//! Command-line workflows: synthetic data, training, calibration,
//! evaluation, live detection and latency benchmarking.

mod config;

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    downsample, load_records, save_records, sliding_windows, split_train_test, synth_generate, Dataset, SynthConfig,
};
use crate::detection::{calibrate, stream_detect, DetectorConfig, Scorer};
use crate::error::{Error, Result};
use crate::evaluation::{bench_latency, build_report, score_records, write_roc_csv, Ablation};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::training::train_checkpoint;

pub use config::{BenchOptions, RunConfig, ScoringOptions};

#[derive(Debug, Parser)]
#[command(name = "mafaae", version, about = "Streaming multivariate anomaly detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data generation, initialization, shuffling and sampled noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Keep every n-th frame of loaded records.
    #[arg(long, global = true, value_name = "N")]
    pub freq_downsample: Option<usize>,
    #[arg(long, global = true, value_parser = ["none", "no-sparsity", "no-flow"])]
    pub ablation: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test split as CSV with manifests.
    GenData {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on normal records and write an uncalibrated checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines training log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Measure normal reconstruction errors and store them in the checkpoint.
    Calibrate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to overwriting the input checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a labelled test set and write the AUROC report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write ROC points as CSV.
        #[arg(long)]
        roc_csv: Option<PathBuf>,
        /// Embed ROC points in the JSON report.
        #[arg(long)]
        roc: bool,
    },
    /// Score a live frame stream (`frame_idx,sig_0,…`) and emit JSON verdicts.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Frame source; standard input when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Verdict sink; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flag windows whose standardized score exceeds this value.
        #[arg(long, conflicts_with = "target_fpr", allow_negative_numbers = true)]
        threshold: Option<f64>,
        /// Derive the threshold from calibration scores.
        #[arg(long)]
        target_fpr: Option<f64>,
    },
    /// Time single-window inference and write the latency report.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Records to draw windows from; synthetic when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

impl Command {
    fn threshold_flags(&self) -> (Option<f64>, Option<f64>) {
        match self {
            Command::Detect { threshold, target_fpr, .. } => (*threshold, *target_fpr),
            _ => (None, None),
        }
    }
}

/// Resolves the configuration and runs one command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.global.freq_downsample {
        cfg.freq_downsample = n;
    }
    if let Some(a) = &cli.global.ablation {
        cfg.ablation = a.parse::<Ablation>()?;
    }
    let (threshold, target_fpr) = cli.command.threshold_flags();
    if threshold.is_some() {
        cfg.detect.threshold = threshold;
        cfg.detect.target_fpr = None;
    }
    if target_fpr.is_some() {
        cfg.detect.target_fpr = target_fpr;
        cfg.detect.threshold = None;
    }
    if let Command::Bench { repetitions: Some(r), .. } = &cli.command {
        cfg.bench.repetitions = *r;
    }
    cfg.resolve();
    cfg.validate()?;
    log::debug!("resolved configuration: {}", cfg.to_json());

    match cli.command {
        Command::GenData { out_dir } => gen_data(&cfg, &out_dir),
        Command::Train { data, out, log } => train(&cfg, &data, &out, log.as_deref()),
        Command::Calibrate { checkpoint, data, out } => {
            calibrate_cmd(&cfg, &checkpoint, &data, out.as_deref().unwrap_or(&checkpoint))
        }
        Command::Eval { checkpoint, data, out, roc_csv, roc } => {
            eval(&cfg, &checkpoint, &data, &out, roc_csv.as_deref(), roc)
        }
        Command::Detect { checkpoint, input, out, .. } => detect(&cfg, &checkpoint, input.as_deref(), out.as_deref()),
        Command::Bench { checkpoint, data, out, .. } => bench(&cfg, &checkpoint, data.as_deref(), out.as_deref()),
    }
}

fn load_dataset(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    let data = load_records(path)?;
    if cfg.freq_downsample > 1 {
        data.map_records(|r| downsample(r, cfg.freq_downsample))
    } else {
        Ok(data)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let synth = SynthConfig { seed: cfg.seed, ..cfg.synth.clone() };
    let data = synth_generate(&synth)?;
    let (train, test) = split_train_test(&data, cfg.train_normal)?;
    fs::create_dir_all(out_dir)?;
    save_records(&train, &out_dir.join("train.csv"))?;
    save_records(&test, &out_dir.join("test.csv"))?;
    log::info!(
        "wrote {} training and {} test records with {} signals to {}",
        train.records.len(),
        test.records.len(),
        data.n_signals,
        out_dir.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig, data: &Path, out: &Path, log_path: Option<&Path>) -> Result<()> {
    let dataset = load_dataset(cfg, data)?;
    let model = cfg.model_config(dataset.n_signals)?;
    let (mut ck, log) = train_checkpoint(&dataset, &model, &cfg.train, &cfg.windowing)?;
    ck.meta.run_config = Some(cfg.to_json());
    save_checkpoint(&ck, out)?;
    if let Some(path) = log_path {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        for e in &log {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    log::info!("checkpoint written to {}", out.display());
    Ok(())
}

fn calibrate_cmd(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let mut ck = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(cfg, data)?;
    check_signals(&ck, dataset.n_signals)?;
    let scorer = Scorer::new(&ck, cfg.scoring.precision, cfg.eps_mode())?;
    let stats = calibrate(&scorer, &dataset.records, &cfg.windowing)?;
    if ck.calibration.is_some() {
        log::warn!("checkpoint was already calibrated; overwriting");
    }
    println!("calibrated on {} windows: mean L1 {:.6}, std {:.6}", stats.n_windows, stats.mean, stats.std);
    ck.calibration = Some(stats);
    save_checkpoint(&ck, out)
}

fn check_signals(ck: &Checkpoint, n: usize) -> Result<()> {
    if ck.config.n_signals != n {
        return Err(Error::Config(format!("data has {n} signals, checkpoint expects {}", ck.config.n_signals)));
    }
    Ok(())
}

fn eval(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path, roc_csv: Option<&Path>, roc: bool) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let scorer = Scorer::calibrated(&ck)?;
    let dataset = load_dataset(cfg, data)?;
    check_signals(&ck, dataset.n_signals)?;
    let (scored, skipped) = score_records(&dataset, &scorer, &cfg.windowing)?;
    let mut report = build_report(&scored, skipped, roc || roc_csv.is_some())?;
    if let (Some(path), Some(points)) = (roc_csv, &report.roc_points) {
        write_roc_csv(points, path)?;
    }
    if !roc {
        report.roc_points = None;
    }
    report.run_config = Some(cfg.to_json());
    println!("overall AUROC {:.4} ± {:.4}", report.overall_mean, report.overall_std);
    write_json(out, &report)
}

fn detect(cfg: &RunConfig, checkpoint: &Path, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let scorer = Scorer::calibrated(&ck)?;
    let threshold = match (cfg.detect.threshold, cfg.detect.target_fpr) {
        (Some(t), _) => t,
        (None, Some(fpr)) => scorer.calibration()?.threshold_for_fpr(fpr)?,
        (None, None) => return Err(Error::Config("detect needs --threshold or --target-fpr".into())),
    };
    let sample_rate_hz = cfg.detect.sample_rate_hz.unwrap_or(cfg.synth.sample_rate_hz);
    let dc = DetectorConfig { threshold, windowing: cfg.windowing, sample_rate_hz };
    log::info!("detecting with threshold {threshold}");
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let summary = match input {
        Some(p) => stream_detect(BufReader::new(fs::File::open(p)?), &scorer, dc, sink)?,
        None => stream_detect(BufReader::new(io::stdin()), &scorer, dc, sink)?,
    };
    log::info!(
        "{} frames, {} verdicts, {} anomalous, {} deadline misses",
        summary.frames,
        summary.verdicts,
        summary.anomalies,
        summary.deadline_misses
    );
    Ok(())
}

fn bench(cfg: &RunConfig, checkpoint: &Path, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let scorer = Scorer::calibrated(&ck)?;
    let dataset = match data {
        Some(p) => load_dataset(cfg, p)?,
        None => synth_generate(&SynthConfig {
            num_normal: 4,
            num_anomalous: 0,
            n_signals: ck.config.n_signals,
            length: cfg.synth.length.max(ck.config.window),
            seed: cfg.seed,
            ..cfg.synth.clone()
        })?,
    };
    check_signals(&ck, dataset.n_signals)?;
    let mut windows = Vec::new();
    for r in dataset.records.iter().filter(|r| r.len() >= cfg.windowing.window) {
        windows.extend(sliding_windows(r, &cfg.windowing)?);
    }
    let report = bench_latency(&scorer, &windows, &cfg.windowing, cfg.bench.warmup, cfg.bench.repetitions)?;
    println!(
        "IQR-mean latency {:.1} µs over {} runs ({:?}, {})",
        report.iqr_mean_us,
        report.timings_us.len(),
        report.precision,
        report.hardware
    );
    let value = serde_json::json!({ "latency": report, "run_config": cfg.to_json() });
    match out {
        Some(p) => write_json(p, &value),
        None => Ok(()),
    }
}
