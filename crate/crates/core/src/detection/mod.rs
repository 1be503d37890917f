//! Calibration of normal reconstruction errors, standardized anomaly scores,
//! thresholding and the streaming detector.

mod stream;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sliding_windows, NormStats, Record, WindowingConfig};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, InferenceModel, Scratch};
use crate::numerics::Matrix;

pub use stream::{parse_frame_line, stream_detect, Detector, DetectorConfig, StreamSummary, Verdict};

/// Floor applied to the calibrated error deviation.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Latent noise used when scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EpsMode {
    /// `z0 = μ`; scores are deterministic.
    #[default]
    Zero,
    /// `ε ~ N(0, I)` drawn from a stream keyed by `(seed, window_start)`.
    Sample { seed: u64 },
}

/// Arithmetic width of the scoring path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Mean and population deviation of L1 reconstruction errors on normal
/// windows, together with the scoring mode they were measured under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub mean: f64,
    /// `≥ SIGMA_FLOOR`.
    pub std: f64,
    pub n_windows: usize,
    pub eps_mode: EpsMode,
    pub precision: Precision,
    /// Calibration errors in ascending order; source of data-driven
    /// thresholds.
    #[serde(default)]
    pub errors: Vec<f64>,
}

impl CalibrationStats {
    pub fn from_errors(errors: &[f64], eps_mode: EpsMode, precision: Precision) -> Result<Self> {
        if errors.len() < 2 {
            return Err(Error::Calibration(format!("calibration needs at least 2 windows, got {}", errors.len())));
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::Calibration("non-finite reconstruction error".into()));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            std: var.sqrt().max(SIGMA_FLOOR),
            n_windows: errors.len(),
            eps_mode,
            precision,
            errors: sorted,
        })
    }

    /// Scores of the calibration windows themselves, ascending.
    pub fn scores(&self) -> Vec<f64> {
        self.errors.iter().map(|&e| anomaly_score(e, self)).collect()
    }

    /// Threshold with the given false-positive rate on the calibration
    /// windows.
    pub fn threshold_for_fpr(&self, fpr: f64) -> Result<f64> {
        threshold_for_fpr(&self.scores(), fpr)
    }
}

/// Sum of absolute entrywise differences.
pub fn l1_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("l1_error of {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum())
}

/// `(L1 − μ) / σ`.
pub fn anomaly_score(l1: f64, stats: &CalibrationStats) -> f64 {
    (l1 - stats.mean) / stats.std
}

/// Strictly greater than the threshold.
pub fn classify(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// Smallest calibration score `θ` such that at most `⌊fpr·n⌋` of `scores`
/// exceed it.
pub fn threshold_for_fpr(scores: &[f64], fpr: f64) -> Result<f64> {
    if !(fpr > 0.0 && fpr < 1.0) {
        return Err(Error::Config(format!("target false-positive rate must lie in (0, 1), got {fpr}")));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("threshold needs finite calibration scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let allowed = (fpr * sorted.len() as f64).floor() as usize;
    Ok(sorted[sorted.len() - 1 - allowed])
}

enum Engine {
    F32(InferenceModel<f32>),
    F64(InferenceModel<f64>),
}

/// Per-thread buffers for [`Scorer`].
pub struct Workspace {
    norm: Vec<f64>,
    eps: Vec<f64>,
    buffers: Buffers,
}

enum Buffers {
    F32 { scratch: Scratch<f32>, input: Vec<f32>, eps: Vec<f32>, out: Vec<f32> },
    F64 { scratch: Scratch<f64>, out: Vec<f64> },
}

/// Immutable scoring pipeline: normalize a raw window, reconstruct it and
/// measure the L1 error in normalized units. Shareable across threads.
pub struct Scorer {
    engine: Engine,
    norm: NormStats,
    eps_mode: EpsMode,
    precision: Precision,
    window: usize,
    n_signals: usize,
    calibration: Option<CalibrationStats>,
}

impl Scorer {
    /// Scoring pipeline for an explicit mode, ignoring stored calibration.
    pub fn new(ck: &Checkpoint, precision: Precision, eps_mode: EpsMode) -> Result<Self> {
        let engine = match precision {
            Precision::F32 => Engine::F32(InferenceModel::new(&ck.config, &ck.generator)?),
            Precision::F64 => Engine::F64(InferenceModel::new(&ck.config, &ck.generator)?),
        };
        Ok(Self {
            engine,
            norm: ck.norm.clone(),
            eps_mode,
            precision,
            window: ck.config.window,
            n_signals: ck.config.n_signals,
            calibration: None,
        })
    }

    /// Scoring pipeline in the mode recorded by calibration.
    pub fn calibrated(ck: &Checkpoint) -> Result<Self> {
        let stats = ck.calibration()?.clone();
        let mut s = Self::new(ck, stats.precision, stats.eps_mode)?;
        s.calibration = Some(stats);
        Ok(s)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn eps_mode(&self) -> EpsMode {
        self.eps_mode
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn calibration(&self) -> Result<&CalibrationStats> {
        self.calibration.as_ref().ok_or_else(|| Error::Calibration("scorer has no calibration".into()))
    }

    pub fn workspace(&self) -> Workspace {
        let d = match &self.engine {
            Engine::F32(m) => m.config().latent_size,
            Engine::F64(m) => m.config().latent_size,
        };
        let len = self.window * self.n_signals;
        let buffers = match &self.engine {
            Engine::F32(m) => {
                Buffers::F32 { scratch: m.scratch(), input: vec![0.0; len], eps: vec![0.0; d], out: vec![0.0; len] }
            }
            Engine::F64(m) => Buffers::F64 { scratch: m.scratch(), out: vec![0.0; len] },
        };
        Workspace { norm: vec![0.0; len], eps: vec![0.0; d], buffers }
    }

    /// L1 reconstruction error of one raw `T_W × N` window (row-major
    /// frames), normalized with the checkpoint statistics.
    pub fn l1_error_raw(&self, frames: &[f64], window_start: usize, ws: &mut Workspace) -> Result<f64> {
        let n = self.n_signals;
        if frames.len() != self.window * n {
            return Err(Error::Shape(format!("window has {} values, expected {}", frames.len(), self.window * n)));
        }
        for (raw, out) in frames.chunks_exact(n).zip(ws.norm.chunks_exact_mut(n)) {
            self.norm.normalize_frame(raw, out);
        }
        let use_eps = match self.eps_mode {
            EpsMode::Zero => false,
            EpsMode::Sample { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(window_start as u64);
                for e in ws.eps.iter_mut() {
                    *e = rand::Rng::sample(&mut rng, StandardNormal);
                }
                true
            }
        };
        let err = match (&self.engine, &mut ws.buffers) {
            (Engine::F32(m), Buffers::F32 { scratch, input, eps, out }) => {
                for (dst, &src) in input.iter_mut().zip(&ws.norm) {
                    *dst = src as f32;
                }
                for (dst, &src) in eps.iter_mut().zip(&ws.eps) {
                    *dst = src as f32;
                }
                m.reconstruct_into(input, use_eps.then_some(&eps[..]), scratch, out)?;
                input.iter().zip(out.iter()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
            }
            (Engine::F64(m), Buffers::F64 { scratch, out }) => {
                m.reconstruct_into(&ws.norm, use_eps.then_some(&ws.eps[..]), scratch, out)?;
                ws.norm.iter().zip(out.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>()
            }
            _ => unreachable!("workspace built by this scorer"),
        };
        if !err.is_finite() {
            return Err(Error::NonFinite { op: "reconstruction" });
        }
        Ok(err)
    }

    /// Standardized score of one raw window.
    pub fn score_raw(&self, frames: &[f64], window_start: usize, ws: &mut Workspace) -> Result<f64> {
        let stats = self.calibration()?;
        Ok(anomaly_score(self.l1_error_raw(frames, window_start, ws)?, stats))
    }

    /// L1 errors of every sliding window of `record`, in window order.
    pub fn record_errors(&self, record: &Record, windowing: &WindowingConfig) -> Result<Vec<(usize, f64)>> {
        self.check_record(record, windowing)?;
        let windows = sliding_windows(record, windowing)?;
        windows
            .par_iter()
            .map_init(|| self.workspace(), |ws, w| Ok((w.start, self.l1_error_raw(&w.values.data, w.start, ws)?)))
            .collect()
    }

    /// Standardized scores of every sliding window of `record`.
    pub fn record_scores(&self, record: &Record, windowing: &WindowingConfig) -> Result<Vec<(usize, f64)>> {
        let stats = self.calibration()?.clone();
        Ok(self.record_errors(record, windowing)?.into_iter().map(|(s, e)| (s, anomaly_score(e, &stats))).collect())
    }

    fn check_record(&self, record: &Record, windowing: &WindowingConfig) -> Result<()> {
        if record.n_signals() != self.n_signals {
            return Err(Error::Config(format!(
                "record {} has {} signals, model expects {}",
                record.sample_id,
                record.n_signals(),
                self.n_signals
            )));
        }
        if windowing.window != self.window {
            return Err(Error::Config(format!(
                "window length {} differs from the model's {}",
                windowing.window, self.window
            )));
        }
        Ok(())
    }
}

/// Calibration statistics over every sliding window of `records`, measured
/// in the scorer's mode.
pub fn calibrate<'a>(
    scorer: &Scorer,
    records: impl IntoIterator<Item = &'a Record>,
    windowing: &WindowingConfig,
) -> Result<CalibrationStats> {
    let errors = calibration_errors(scorer, records, windowing)?;
    CalibrationStats::from_errors(&errors, scorer.eps_mode, scorer.precision)
}

/// Window errors of `records` in record order; records shorter than one
/// window contribute nothing.
pub fn calibration_errors<'a>(
    scorer: &Scorer,
    records: impl IntoIterator<Item = &'a Record>,
    windowing: &WindowingConfig,
) -> Result<Vec<f64>> {
    let mut errors = Vec::new();
    for r in records {
        if r.label.is_anomalous() {
            return Err(Error::Calibration(format!("record {} is anomalous", r.sample_id)));
        }
        if r.len() < windowing.window {
            continue;
        }
        errors.extend(scorer.record_errors(r, windowing)?.into_iter().map(|(_, e)| e));
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(mean: f64, std: f64) -> CalibrationStats {
        CalibrationStats { mean, std, n_windows: 2, eps_mode: EpsMode::Zero, precision: Precision::F64, errors: vec![] }
    }

    #[test]
    fn l1_examples() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(l1_error(&a, &a).unwrap(), 0.0);
        let b = Matrix::new(2, 2, vec![1.5, 2.5, 3.5, 4.5]).unwrap();
        assert_eq!(l1_error(&a, &b).unwrap(), 2.0);
        let mut c = a.clone();
        c.data[2] -= 3.0;
        assert_eq!(l1_error(&a, &c).unwrap(), 3.0);
        assert!(l1_error(&a, &Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn calibration_examples() {
        let s = CalibrationStats::from_errors(&[2.0, 4.0, 6.0], EpsMode::Zero, Precision::F64).unwrap();
        assert_eq!(s.mean, 4.0);
        assert!((s.std - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let flat = CalibrationStats::from_errors(&[5.0; 4], EpsMode::Zero, Precision::F64).unwrap();
        assert_eq!(flat.std, SIGMA_FLOOR);
        assert!(matches!(
            CalibrationStats::from_errors(&[1.0], EpsMode::Zero, Precision::F64),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn score_and_classify_examples() {
        let s = stats(10.0, 4.0);
        assert_eq!(anomaly_score(10.0, &s), 0.0);
        assert_eq!(anomaly_score(18.0, &s), 2.0);
        assert_eq!(anomaly_score(4.0, &s), -1.5);
        assert!(classify(2.1, 2.0));
        assert!(!classify(2.0, 2.0));
        assert!(!classify(-1.0, 0.0));
    }

    #[test]
    fn fpr_threshold() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = threshold_for_fpr(&scores, 0.05).unwrap();
        assert_eq!(t, 95.0);
        assert_eq!(scores.iter().filter(|&&s| classify(s, t)).count(), 5);
        assert_eq!(threshold_for_fpr(&scores, 0.001).unwrap(), 100.0);
        assert!(threshold_for_fpr(&scores, 0.0).is_err());
        assert!(threshold_for_fpr(&scores, 1.0).is_err());
    }

    #[test]
    fn eps_mode_serializes_with_tag() {
        let j = serde_json::to_string(&EpsMode::Sample { seed: 3 }).unwrap();
        assert_eq!(j, r#"{"mode":"sample","seed":3}"#);
        assert_eq!(serde_json::to_string(&EpsMode::Zero).unwrap(), r#"{"mode":"zero"}"#);
    }

    proptest! {
        #[test]
        fn score_is_increasing_in_error(
            mean in -5.0f64..50.0,
            std in 1e-3f64..10.0,
            a in 0.0f64..100.0,
            delta in 1e-6f64..10.0,
        ) {
            let s = stats(mean, std);
            prop_assert!(anomaly_score(a + delta, &s) > anomaly_score(a, &s));
        }

        #[test]
        fn classify_is_monotone_and_strict(score in -50.0f64..50.0, threshold in -50.0f64..50.0, up in 0.0f64..5.0) {
            prop_assert!(!classify(threshold, threshold));
            if classify(score, threshold) {
                prop_assert!(classify(score + up, threshold));
            }
        }

        #[test]
        fn fpr_threshold_bounds_flagged_fraction(
            scores in prop::collection::vec(-5.0f64..5.0, 1..300),
            fpr in 0.001f64..0.999,
        ) {
            let t = threshold_for_fpr(&scores, fpr).unwrap();
            let flagged = scores.iter().filter(|&&s| classify(s, t)).count();
            prop_assert!(flagged as f64 <= fpr * scores.len() as f64);
        }
    }
}
