//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use mafaae::data::{fit_normalization, synth_generate, Dataset, Record, SynthConfig, WindowingConfig};
use mafaae::detection::{calibrate, EpsMode, Precision, Scorer};
use mafaae::model::{Checkpoint, CheckpointMeta, DiscriminatorParams, GeneratorParams, ModelConfig};

/// Small synthetic set with the default record shape (`N = 12`, 300 frames).
pub fn small_dataset(seed: u64) -> Dataset {
    synth_generate(&SynthConfig { num_normal: 12, num_anomalous: 6, seed, ..SynthConfig::default() }).unwrap()
}

/// Freshly initialized default-size model, normalized and calibrated on the
/// normal records of `data`. Scoring does not need a trained model.
pub fn calibrated_checkpoint(data: &Dataset, precision: Precision, eps_mode: EpsMode) -> Checkpoint {
    let windowing = WindowingConfig::default();
    let config = ModelConfig::new(data.n_signals, windowing.window);
    let mut ck = Checkpoint {
        norm: fit_normalization(data.normal()).unwrap(),
        generator: GeneratorParams::init(&config, 3).unwrap(),
        discriminator: DiscriminatorParams::init(&config, 4).unwrap(),
        calibration: None,
        meta: CheckpointMeta::new(Some(3), 0),
        config,
    };
    let scorer = Scorer::new(&ck, precision, eps_mode).unwrap();
    ck.calibration = Some(calibrate(&scorer, data.normal(), &windowing).unwrap());
    ck
}

/// `frame_idx,sig_0,…` lines for the first `frames` frames of `record`.
pub fn replay_lines(record: &Record, frames: usize) -> String {
    let mut out = String::new();
    for t in 0..frames {
        let row: Vec<String> = record.frames.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{t},{}\n", row.join(",")));
    }
    out
}
