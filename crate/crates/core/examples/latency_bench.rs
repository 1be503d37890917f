//! Times single-window scoring at the default sizes in both precisions.
//! The weights do not affect timing, so the model is left untrained.
//!
//! `cargo run --release --example latency_bench`

use mafaae::data::{fit_normalization, sliding_windows, synth_generate, SynthConfig, WindowingConfig};
use mafaae::detection::{calibrate, EpsMode, Precision, Scorer};
use mafaae::evaluation::bench_latency;
use mafaae::model::{Checkpoint, CheckpointMeta, DiscriminatorParams, GeneratorParams, ModelConfig};

fn main() -> mafaae::Result<()> {
    let data = synth_generate(&SynthConfig { num_normal: 10, num_anomalous: 0, ..SynthConfig::default() })?;
    let windowing = WindowingConfig::default();
    let config = ModelConfig::new(data.n_signals, windowing.window);
    let mut ck = Checkpoint {
        norm: fit_normalization(&data.records)?,
        generator: GeneratorParams::init(&config, 0)?,
        discriminator: DiscriminatorParams::init(&config, 1)?,
        calibration: None,
        meta: CheckpointMeta::new(Some(0), 0),
        config,
    };
    let windows: Vec<_> = data.records.iter().flat_map(|r| sliding_windows(r, &windowing).unwrap()).collect();
    for precision in [Precision::F32, Precision::F64] {
        let scorer = Scorer::new(&ck, precision, EpsMode::Zero)?;
        ck.calibration = Some(calibrate(&scorer, &data.records, &windowing)?);
        let report = bench_latency(&Scorer::calibrated(&ck)?, &windows, &windowing, 100, 1000)?;
        println!(
            "{precision:?}: IQR-mean {:.1} µs (Q1 {:.1}, Q3 {:.1}) over {} runs on {}",
            report.iqr_mean_us,
            report.q1_us,
            report.q3_us,
            report.timings_us.len(),
            report.hardware
        );
    }
    Ok(())
}
