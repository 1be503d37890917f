use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{SynthConfig, WindowingConfig};
use crate::detection::{EpsMode, Precision};
use crate::error::{Error, Result};
use crate::evaluation::{Ablation, MIN_TIMED};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Optional overrides of the size-derived model defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub hidden_size: Option<usize>,
    pub latent_size: Option<usize>,
    pub flow_layers: Option<usize>,
    pub alpha_const: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringOptions {
    pub precision: Precision,
    /// Draw latent noise at scoring time instead of using the mean.
    pub sample_eps: bool,
}

impl ScoringOptions {
    /// Sampled noise is keyed by the run seed.
    pub fn eps_mode_with(&self, seed: u64) -> EpsMode {
        if self.sample_eps {
            EpsMode::Sample { seed }
        } else {
            EpsMode::Zero
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectOptions {
    pub threshold: Option<f64>,
    pub target_fpr: Option<f64>,
    /// Frame rate of the live stream; defaults to the synthetic rate.
    pub sample_rate_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchOptions {
    pub warmup: usize,
    pub repetitions: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { warmup: 100, repetitions: 1000 }
    }
}

/// Every setting of a run. Loaded from TOML, overridden by flags, and
/// echoed into each artifact so the run can be repeated from it alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub freq_downsample: usize,
    pub ablation: Ablation,
    /// Normal records assigned to the training split by `gen-data`.
    pub train_normal: usize,
    pub windowing: WindowingConfig,
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub scoring: ScoringOptions,
    pub detect: DetectOptions,
    pub bench: BenchOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            freq_downsample: 1,
            ablation: Ablation::None,
            train_normal: 200,
            windowing: WindowingConfig::default(),
            model: ModelOverrides::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            scoring: ScoringOptions::default(),
            detect: DetectOptions::default(),
            bench: BenchOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    /// Propagates the run seed into the sections that carry their own.
    pub fn resolve(&mut self) {
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.freq_downsample < 1 {
            return Err(Error::Config("freq_downsample must be >= 1".into()));
        }
        self.windowing.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if let Some(t) = self.detect.threshold {
            if !t.is_finite() {
                return Err(Error::Config("threshold must be finite".into()));
            }
        }
        if let Some(f) = self.detect.target_fpr {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("target false-positive rate must lie in (0, 1), got {f}")));
            }
        }
        if self.bench.repetitions < MIN_TIMED {
            return Err(Error::Config(format!("bench repetitions must be >= {MIN_TIMED}")));
        }
        Ok(())
    }

    pub fn eps_mode(&self) -> EpsMode {
        self.scoring.eps_mode_with(self.seed)
    }

    /// Model for `n_signals` signals: size defaults, overrides, then the
    /// ablation.
    pub fn model_config(&self, n_signals: usize) -> Result<ModelConfig> {
        let o = &self.model;
        let base = ModelConfig::new(n_signals, self.windowing.window);
        let mut m = ModelConfig::with_sizes(
            n_signals,
            self.windowing.window,
            o.hidden_size.unwrap_or(base.hidden_size),
            o.latent_size.unwrap_or(base.latent_size),
        );
        if let Some(k) = o.flow_layers {
            m.flow_layers = k;
        }
        if let Some(a) = o.alpha_const {
            m.alpha_const = a;
        }
        let m = self.ablation.apply(&m);
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let partial = RunConfig::from_toml("seed = 7\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.train.epochs, 3);
        assert_eq!(partial.train.batch_size, 8);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml("sed = 7").is_err());
        let mut cfg = RunConfig::default();
        cfg.detect.target_fpr = Some(1.5);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn model_resolution_applies_ablation() {
        let mut cfg = RunConfig::default();
        cfg.model.flow_layers = Some(2);
        assert_eq!(cfg.model_config(12).unwrap().flow_layers, 2);
        cfg.ablation = Ablation::NoFlow;
        assert_eq!(cfg.model_config(12).unwrap().active_flow_layers(), 0);
    }
}
