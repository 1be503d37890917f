//! Records, per-feature standardization, frame-selection downsampling and
//! sliding-window segmentation.

mod csv_io;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use csv_io::{load_records, manifest_path, save_records, Manifest, SCHEMA_VERSION};
pub use synth::{split_train_test, synth_generate, AnomalyKind, SynthConfig, SynthGenerator};

/// Floor applied to per-feature standard deviations.
pub const NORM_STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// One task execution: `T × N` frames, row = time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub sample_id: String,
    pub frames: Matrix,
    pub label: Label,
    pub anomaly_type: Option<String>,
    pub sample_rate_hz: f64,
}

impl Record {
    pub fn new(
        sample_id: impl Into<String>,
        frames: Matrix,
        anomaly_type: Option<String>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if frames.rows == 0 || frames.cols == 0 {
            return Err(Error::Data(format!("record {sample_id} has no frames or no signals")));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Data(format!("record {sample_id}: sample rate must be positive")));
        }
        let label = if anomaly_type.is_some() { Label::Anomalous } else { Label::Normal };
        Ok(Self { sample_id, frames, label, anomaly_type, sample_rate_hz })
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.frames.rows
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows == 0
    }

    /// Number of signals `N`.
    pub fn n_signals(&self) -> usize {
        self.frames.cols
    }
}

/// A set of records sharing `N` and the sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub n_signals: usize,
    pub sample_rate_hz: f64,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Data("empty dataset".into()))?;
        let n = first.n_signals();
        let rate = first.sample_rate_hz;
        for r in &records {
            if r.n_signals() != n {
                return Err(Error::Data(format!("record {} has {} signals, expected {n}", r.sample_id, r.n_signals())));
            }
            if r.sample_rate_hz != rate {
                return Err(Error::Data(format!("record {} has a different sample rate", r.sample_id)));
            }
        }
        Ok(Self { records, n_signals: n, sample_rate_hz: rate })
    }

    pub fn normal(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.label == Label::Normal)
    }

    pub fn map_records(&self, f: impl Fn(&Record) -> Result<Record>) -> Result<Self> {
        Dataset::new(self.records.iter().map(f).collect::<Result<Vec<_>>>()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowingConfig {
    /// Window length `T_W` in steps.
    pub window: usize,
    /// Stride `T_S` in steps.
    pub stride: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self { window: 150, stride: 50 }
    }
}

impl WindowingConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let cfg = Self { window, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "windowing requires 1 <= stride <= window, got window={} stride={}",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    /// `floor((T − T_W)/T_S) + 1` for `T ≥ T_W`, else 0.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Matrix,
}

/// Windows starting at `0, T_S, 2·T_S, …`; trailing frames that cannot fill
/// a window are dropped.
pub fn sliding_windows(record: &Record, cfg: &WindowingConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    if record.len() < cfg.window {
        return Err(Error::Data(format!(
            "record {} shorter than window ({} < {})",
            record.sample_id,
            record.len(),
            cfg.window
        )));
    }
    let n = record.n_signals();
    Ok((0..cfg.count(record.len()))
        .map(|i| {
            let start = i * cfg.stride;
            let data = record.frames.data[start * n..(start + cfg.window) * n].to_vec();
            Window { start, values: Matrix { rows: cfg.window, cols: n, data } }
        })
        .collect())
}

/// Keeps frames `0, n, 2n, …` and divides the sample rate by `n`.
pub fn downsample(record: &Record, n: usize) -> Result<Record> {
    if n < 1 {
        return Err(Error::Config("downsample factor must be >= 1".into()));
    }
    let cols = record.n_signals();
    let mut data = Vec::with_capacity(record.len().div_ceil(n) * cols);
    for t in (0..record.len()).step_by(n) {
        data.extend_from_slice(record.frames.row(t));
    }
    let rows = data.len() / cols;
    Ok(Record {
        frames: Matrix { rows, cols, data },
        sample_rate_hz: record.sample_rate_hz / n as f64,
        ..record.clone()
    })
}

/// Per-feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Zero mean, unit deviation.
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    pub fn n_signals(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn normalize_frame(&self, frame: &[f64], out: &mut [f64]) {
        for (j, (o, &x)) in out.iter_mut().zip(frame).enumerate() {
            *o = (x - self.mean[j]) / self.std[j];
        }
    }
}

/// Frame-weighted statistics over every frame of every record.
pub fn fit_normalization<'a>(records: impl IntoIterator<Item = &'a Record>) -> Result<NormStats> {
    let records: Vec<&Record> = records.into_iter().collect();
    let first = records.first().ok_or_else(|| Error::Data("cannot fit normalization on no records".into()))?;
    let n = first.n_signals();
    let mut sum = vec![0.0; n];
    let mut count = 0usize;
    for r in &records {
        if r.n_signals() != n {
            return Err(Error::Shape(format!("record {} has {} signals, expected {n}", r.sample_id, r.n_signals())));
        }
        for row in r.frames.data.chunks(n) {
            for (s, &x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        count += r.len();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; n];
    for r in &records {
        for row in r.frames.data.chunks(n) {
            for j in 0..n {
                let d = row[j] - mean[j];
                sq[j] += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt().max(NORM_STD_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

pub fn apply_normalization(record: &Record, stats: &NormStats) -> Result<Record> {
    let n = record.n_signals();
    if stats.n_signals() != n {
        return Err(Error::Shape(format!(
            "normalization stats cover {} signals, record {} has {n}",
            stats.n_signals(),
            record.sample_id
        )));
    }
    let mut data = vec![0.0; record.frames.data.len()];
    for (src, dst) in record.frames.data.chunks(n).zip(data.chunks_mut(n)) {
        stats.normalize_frame(src, dst);
    }
    Ok(Record { frames: Matrix { rows: record.len(), cols: n, data }, ..record.clone() })
}

pub fn invert_normalization(record: &Record, stats: &NormStats) -> Result<Record> {
    let n = record.n_signals();
    if stats.n_signals() != n {
        return Err(Error::Shape("normalization stats do not match record".into()));
    }
    let mut out = record.clone();
    for row in out.frames.data.chunks_mut(n) {
        for ((v, s), m) in row.iter_mut().zip(&stats.std).zip(&stats.mean) {
            *v = *v * s + m;
        }
    }
    Ok(out)
}
