//! Record-level scoring, AUROC per anomaly type, latency measurement and
//! ablation comparisons.

mod latency;
mod roc;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, WindowingConfig};
use crate::detection::{calibrate, EpsMode, Precision, Scorer};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::training::{train_checkpoint, EpochLog, TrainConfig};

pub use latency::{bench_latency, iqr_mean, quantile_inclusive, LatencyReport, MIN_TIMED};
pub use roc::{auroc, per_type_auroc, roc_curve, trapezoid_area, RocPoint, TypeAurocs};

/// A record with its window scores; `record_score` is their maximum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub sample_id: String,
    pub label: Label,
    pub anomaly_type: Option<String>,
    pub record_score: f64,
    pub window_scores: Vec<f64>,
}

/// Scores every record long enough for one window. Returns the scored
/// records in input order and the number skipped.
pub fn score_records(
    dataset: &Dataset,
    scorer: &Scorer,
    windowing: &WindowingConfig,
) -> Result<(Vec<ScoredRecord>, usize)> {
    let (long, short): (Vec<_>, Vec<_>) = dataset.records.iter().partition(|r| r.len() >= windowing.window);
    for r in &short {
        log::warn!("record {} has {} frames, fewer than one window; skipped", r.sample_id, r.len());
    }
    let scored = long
        .par_iter()
        .map(|r| {
            let window_scores: Vec<f64> = scorer.record_scores(r, windowing)?.into_iter().map(|(_, s)| s).collect();
            let record_score = window_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(ScoredRecord {
                sample_id: r.sample_id.clone(),
                label: r.label,
                anomaly_type: r.anomaly_type.clone(),
                record_score,
                window_scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scored, short.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, f64>,
    pub overall_mean: f64,
    pub overall_std: f64,
    /// AUROC over all records regardless of type.
    pub pooled_auroc: f64,
    pub n_records: usize,
    pub n_skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_points: Option<Vec<RocPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

pub fn build_report(scored: &[ScoredRecord], n_skipped: usize, with_roc: bool) -> Result<EvalReport> {
    let types = per_type_auroc(scored.iter().map(|r| (r.record_score, r.anomaly_type.as_deref())))?;
    let scores: Vec<f64> = scored.iter().map(|r| r.record_score).collect();
    let labels: Vec<bool> = scored.iter().map(|r| r.label.is_anomalous()).collect();
    Ok(EvalReport {
        per_type: types.per_type,
        overall_mean: types.overall_mean,
        overall_std: types.overall_std,
        pooled_auroc: auroc(&scores, &labels)?,
        n_records: scored.len(),
        n_skipped,
        roc_points: if with_roc { Some(roc_curve(&scores, &labels)?) } else { None },
        run_config: None,
    })
}

/// Writes `threshold,fpr,tpr` rows.
pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything needed to train, calibrate and score one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub windowing: WindowingConfig,
    pub precision: Precision,
    pub eps_mode: EpsMode,
}

impl Experiment {
    /// Defaults for `n_signals` signals and the default window.
    pub fn new(n_signals: usize, seed: u64) -> Self {
        let windowing = WindowingConfig::default();
        Self {
            model: ModelConfig::new(n_signals, windowing.window),
            train: TrainConfig { seed, ..TrainConfig::default() },
            windowing,
            precision: Precision::default(),
            eps_mode: EpsMode::default(),
        }
    }
}

/// Trains on `train_raw` and calibrates on the same records.
pub fn fit_calibrated(train_raw: &Dataset, exp: &Experiment) -> Result<(Checkpoint, Vec<EpochLog>)> {
    let (mut ck, log) = train_checkpoint(train_raw, &exp.model, &exp.train, &exp.windowing)?;
    let scorer = Scorer::new(&ck, exp.precision, exp.eps_mode)?;
    ck.calibration = Some(calibrate(&scorer, &train_raw.records, &exp.windowing)?);
    Ok((ck, log))
}

/// Scores `test_raw` with a calibrated checkpoint.
pub fn evaluate(
    ck: &Checkpoint,
    test_raw: &Dataset,
    windowing: &WindowingConfig,
    with_roc: bool,
) -> Result<EvalReport> {
    let scorer = Scorer::calibrated(ck)?;
    let (scored, skipped) = score_records(test_raw, &scorer, windowing)?;
    build_report(&scored, skipped, with_roc)
}

/// Model variant with one component removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Hidden and latent widths `N/2` and no L1 penalty.
    NoSparsity,
    /// No flow layers, so `z_K = z_0`.
    NoFlow,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::None, Ablation::NoSparsity, Ablation::NoFlow];

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        match self {
            Ablation::None => base.clone(),
            Ablation::NoSparsity => {
                let half = (base.n_signals / 2).max(1);
                ModelConfig {
                    sparsity: false,
                    flow_layers: base.flow_layers,
                    flow: base.flow,
                    alpha_const: base.alpha_const,
                    ..ModelConfig::with_sizes(base.n_signals, base.window, half, half)
                }
            }
            Ablation::NoFlow => ModelConfig { flow: false, flow_layers: 0, ..base.clone() },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoSparsity => "no-sparsity",
            Ablation::NoFlow => "no-flow",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}; expected none, no-sparsity or no-flow")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationResult {
    pub variant: Ablation,
    pub report: EvalReport,
}

/// Trains and evaluates the full model and both ablations on the same data
/// and seed.
pub fn run_ablation(train_raw: &Dataset, test_raw: &Dataset, base: &Experiment) -> Result<Vec<AblationResult>> {
    Ablation::ALL
        .into_iter()
        .map(|variant| {
            let exp = Experiment { model: variant.apply(&base.model), ..base.clone() };
            let (ck, _) = fit_calibrated(train_raw, &exp)?;
            Ok(AblationResult { variant, report: evaluate(&ck, test_raw, &exp.windowing, false)? })
        })
        .collect()
}
