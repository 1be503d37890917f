//! Feeds one normal record and one record of each anomaly kind frame by
//! frame through the ring-buffer detector. Flagged windows end in `!`.
//!
//! `cargo run --release --example streaming_detector -- [epochs]`

use mafaae::data::{split_train_test, synth_generate, SynthConfig};
use mafaae::detection::{Detector, DetectorConfig, Scorer};
use mafaae::evaluation::{fit_calibrated, Experiment};

fn main() -> mafaae::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let data = synth_generate(&SynthConfig::default())?;
    let (train, test) = split_train_test(&data, 200)?;
    let mut exp = Experiment::new(data.n_signals, 0);
    exp.train.epochs = epochs;
    let (ck, _) = fit_calibrated(&train, &exp)?;

    let scorer = Scorer::calibrated(&ck)?;
    // flag roughly 1% of normal windows
    let threshold = scorer.calibration()?.threshold_for_fpr(0.01)?;
    println!("threshold {threshold:.3}");
    let mut shown = Vec::new();
    for kind in [None, Some("spike"), Some("drift"), Some("dropout")] {
        shown.extend(test.records.iter().find(|r| r.anomaly_type.as_deref() == kind));
    }
    for record in shown {
        let cfg = DetectorConfig { threshold, windowing: exp.windowing, sample_rate_hz: data.sample_rate_hz };
        let mut detector = Detector::new(&scorer, cfg)?;
        let mut line = format!("{:16} {:8}", record.sample_id, record.anomaly_type.as_deref().unwrap_or("normal"));
        for t in 0..record.len() {
            if let Some(v) = detector.push(record.frames.row(t))? {
                let flag = if v.is_anomaly { "!" } else { " " };
                line.push_str(&format!("  @{:<3} {:7.2}{flag}", v.window_start, v.score));
            }
        }
        println!("{line}");
    }
    Ok(())
}
