//! Synthetic multi-joint torque-like signals for desk-scale verification.
//!
//! Normal records sum two harmonics per feature around a per-feature offset,
//! with record-level time shift and gain jitter shared by all features plus
//! white noise. Anomalous records take a fresh normal record and inject one
//! of three archetypes on a random subset of 2 to 4 features:
//!
//! * `spike`: a short Gaussian bump pushing away from zero (collision-like)
//! * `drift`: a linear ramp from a random onset to the end (friction-like)
//! * `dropout`: a segment where the signal reads exactly zero (grip-loss-like)
//!
//! Every record draws from its own ChaCha stream derived from the seed, so a
//! record is reproducible independently of how many others are generated.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Record};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    Spike,
    Drift,
    Dropout,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [AnomalyKind::Spike, AnomalyKind::Drift, AnomalyKind::Dropout];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::Drift => "drift",
            AnomalyKind::Dropout => "dropout",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spike" => Ok(AnomalyKind::Spike),
            "drift" => Ok(AnomalyKind::Drift),
            "dropout" => Ok(AnomalyKind::Dropout),
            other => Err(Error::Config(format!("unknown anomaly kind `{other}` (expected spike, drift or dropout)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_normal: usize,
    pub num_anomalous: usize,
    /// Frames per record.
    pub length: usize,
    pub n_signals: usize,
    pub anomaly_kinds: Vec<String>,
    pub seed: u64,
    pub sample_rate_hz: f64,
    /// Noise standard deviation relative to each feature's amplitude.
    pub noise_std: f64,
    /// Fractional time-shift jitter shared across features of one record.
    pub phase_jitter: f64,
    /// Spike height in units of feature amplitude.
    pub spike_magnitude: f64,
    /// Final drift offset in units of feature amplitude.
    pub drift_magnitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_normal: 250,
            num_anomalous: 50,
            length: 300,
            n_signals: 12,
            anomaly_kinds: AnomalyKind::ALL.iter().map(|k| k.to_string()).collect(),
            seed: 0,
            sample_rate_hz: 100.0,
            noise_std: 0.05,
            phase_jitter: 0.03,
            spike_magnitude: 5.0,
            drift_magnitude: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn kinds(&self) -> Result<Vec<AnomalyKind>> {
        self.anomaly_kinds.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let kinds = self.kinds()?;
        if self.n_signals < 2 {
            return Err(Error::Config("synthetic data needs at least 2 signals".into()));
        }
        if self.length < 20 {
            return Err(Error::Config("synthetic records need at least 20 frames".into()));
        }
        if self.num_anomalous > 0 && kinds.is_empty() {
            return Err(Error::Config("anomalous records requested but no anomaly kinds given".into()));
        }
        if !self.sample_rate_hz.is_finite()
            || self.sample_rate_hz <= 0.0
            || self.noise_std < 0.0
            || self.phase_jitter < 0.0
        {
            return Err(Error::Config("invalid synthetic signal parameters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct FeatureProfile {
    cycles: f64,
    phase: f64,
    amplitude: f64,
    offset: f64,
    harmonic: f64,
}

pub struct SynthGenerator {
    config: SynthConfig,
    kinds: Vec<AnomalyKind>,
    profile: Vec<FeatureProfile>,
}

const STREAM_PROFILE: u64 = 0;
const STREAM_NORMAL: u64 = 1 << 32;
const STREAM_ANOMALOUS: u64 = 2 << 32;
const STREAM_INJECT: u64 = 3 << 32;

impl SynthGenerator {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let kinds = config.kinds()?;
        let mut rng = stream_rng(config.seed, STREAM_PROFILE);
        let profile = (0..config.n_signals)
            .map(|_| {
                let amplitude = rng.random_range(0.5..2.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                FeatureProfile {
                    cycles: rng.random_range(1.0..3.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                    amplitude,
                    offset: sign * amplitude * rng.random_range(1.5..3.0),
                    harmonic: rng.random_range(0.1..0.4),
                }
            })
            .collect();
        Ok(Self { config, kinds, profile })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    /// Amplitude of feature `j`, the unit of anomaly magnitudes.
    pub fn amplitude(&self, j: usize) -> f64 {
        self.profile[j].amplitude
    }

    fn base(&self, rng: &mut ChaCha8Rng) -> Matrix {
        let t_len = self.config.length;
        let n = self.config.n_signals;
        let shift = rng.random_range(-1.0..=1.0) * self.config.phase_jitter;
        let gain = 1.0 + 0.03 * rng.sample::<f64, _>(StandardNormal);
        let mut data = Vec::with_capacity(t_len * n);
        for t in 0..t_len {
            let u = t as f64 / t_len as f64 + shift;
            for p in &self.profile {
                let arg = 2.0 * PI * p.cycles * u + p.phase;
                let clean = p.offset + gain * p.amplitude * (arg.sin() + p.harmonic * (2.0 * arg).sin());
                let noise: f64 = rng.sample(StandardNormal);
                data.push(clean + self.config.noise_std * p.amplitude * noise);
            }
        }
        Matrix { rows: t_len, cols: n, data }
    }

    pub fn normal_record(&self, index: usize) -> Record {
        let mut rng = stream_rng(self.config.seed, STREAM_NORMAL + index as u64);
        let frames = self.base(&mut rng);
        Record {
            sample_id: format!("normal_{index:05}"),
            frames,
            label: Label::Normal,
            anomaly_type: None,
            sample_rate_hz: self.config.sample_rate_hz,
        }
    }

    /// Normal record that anomalous record `index` is built from.
    pub fn anomalous_base(&self, index: usize) -> Record {
        let mut rng = stream_rng(self.config.seed, STREAM_ANOMALOUS + index as u64);
        Record {
            sample_id: format!("anomalous_{index:05}"),
            frames: self.base(&mut rng),
            label: Label::Normal,
            anomaly_type: None,
            sample_rate_hz: self.config.sample_rate_hz,
        }
    }

    /// Anomalous record `index`; kinds are assigned round-robin.
    pub fn anomalous_record(&self, index: usize) -> Result<Record> {
        let kind = *self
            .kinds
            .get(index % self.kinds.len().max(1))
            .ok_or_else(|| Error::Config("no anomaly kinds configured".into()))?;
        let base = self.anomalous_base(index);
        let mut rng = stream_rng(self.config.seed, STREAM_INJECT + index as u64);
        let k = rng.random_range(2..=self.config.n_signals.min(4));
        let mut features = sample(&mut rng, self.config.n_signals, k).into_vec();
        features.sort_unstable();
        Ok(self.inject(&base, kind, &features, &mut rng))
    }

    /// Applies `kind` to `features` of `base` and labels the result.
    pub fn inject(&self, base: &Record, kind: AnomalyKind, features: &[usize], rng: &mut impl Rng) -> Record {
        let mut out = base.clone();
        let t_len = out.len();
        let n = out.n_signals();
        let frames = &mut out.frames.data;
        match kind {
            AnomalyKind::Spike => {
                let center = rng.random_range(10..t_len - 10) as f64;
                let width = 3.0;
                for &j in features {
                    let p = &self.profile[j];
                    let height = self.config.spike_magnitude * p.amplitude * p.offset.signum();
                    for t in 0..t_len {
                        let d = (t as f64 - center) / width;
                        frames[t * n + j] += height * (-0.5 * d * d).exp();
                    }
                }
            }
            AnomalyKind::Drift => {
                let onset = rng.random_range(t_len / 5..(3 * t_len) / 5);
                let span = (t_len - onset) as f64;
                for &j in features {
                    let p = &self.profile[j];
                    let slope = self.config.drift_magnitude * p.amplitude * p.offset.signum() / span;
                    for t in onset..t_len {
                        frames[t * n + j] += slope * (t - onset) as f64;
                    }
                }
            }
            AnomalyKind::Dropout => {
                let len = rng.random_range(t_len / 10..=t_len / 4);
                let start = rng.random_range(t_len / 10..t_len - len);
                for &j in features {
                    for t in start..start + len {
                        frames[t * n + j] = 0.0;
                    }
                }
            }
        }
        out.label = Label::Anomalous;
        out.anomaly_type = Some(kind.to_string());
        out
    }

    pub fn generate(&self) -> Result<Dataset> {
        let mut records: Vec<Record> = (0..self.config.num_normal).map(|i| self.normal_record(i)).collect();
        for i in 0..self.config.num_anomalous {
            records.push(self.anomalous_record(i)?);
        }
        Dataset::new(records)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    SynthGenerator::new(config.clone())?.generate()
}

/// Splits off the first `train_normal` normal records as a training set;
/// everything else becomes the test set.
pub fn split_train_test(dataset: &Dataset, train_normal: usize) -> Result<(Dataset, Dataset)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in &dataset.records {
        if r.label == Label::Normal && train.len() < train_normal {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    if train.len() < train_normal {
        return Err(Error::Config(format!(
            "requested {train_normal} training records but only {} normal records exist",
            train.len()
        )));
    }
    Ok((Dataset::new(train)?, Dataset::new(test)?))
}
