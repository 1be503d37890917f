mod common;

use std::io::Cursor;

use common::{calibrated_checkpoint, replay_lines, small_dataset};
use mafaae::data::WindowingConfig;
use mafaae::detection::{stream_detect, Detector, DetectorConfig, EpsMode, Precision, Scorer, Verdict};
use mafaae::Error;

fn detector_config(threshold: f64) -> DetectorConfig {
    DetectorConfig { threshold, windowing: WindowingConfig::default(), sample_rate_hz: 100.0 }
}

fn run_stream(scorer: &Scorer, input: &str) -> mafaae::Result<Vec<Verdict>> {
    let mut out = Vec::new();
    stream_detect(Cursor::new(input.to_string()), scorer, detector_config(2.0), &mut out)?;
    Ok(String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect())
}

#[test]
fn replay_matches_batch_scoring_bitwise() {
    let data = small_dataset(1);
    for (precision, eps) in [
        (Precision::F32, EpsMode::Zero),
        (Precision::F64, EpsMode::Zero),
        (Precision::F32, EpsMode::Sample { seed: 9 }),
    ] {
        let ck = calibrated_checkpoint(&data, precision, eps);
        let scorer = Scorer::calibrated(&ck).unwrap();
        for record in data.records.iter().take(4).chain(data.records.iter().rev().take(2)) {
            let batch = scorer.record_scores(record, &WindowingConfig::default()).unwrap();
            let streamed = run_stream(&scorer, &replay_lines(record, record.len())).unwrap();
            assert_eq!(streamed.len(), (record.len() - 150) / 50 + 1);
            assert_eq!(streamed.len(), batch.len());
            for (v, (start, score)) in streamed.iter().zip(&batch) {
                assert_eq!(v.window_start, *start);
                assert_eq!(v.score.to_bits(), score.to_bits(), "{precision:?} {eps:?}");
                assert_eq!(v.is_anomaly, *score > 2.0);
            }
        }
    }
}

#[test]
fn emission_schedule() {
    let data = small_dataset(2);
    let ck = calibrated_checkpoint(&data, Precision::F32, EpsMode::Zero);
    let scorer = Scorer::calibrated(&ck).unwrap();
    let record = &data.records[0];

    let starts: Vec<usize> =
        run_stream(&scorer, &replay_lines(record, 250)).unwrap().iter().map(|v| v.window_start).collect();
    assert_eq!(starts, [0, 50, 100]);
    assert!(run_stream(&scorer, &replay_lines(record, 149)).unwrap().is_empty());
    assert_eq!(run_stream(&scorer, &replay_lines(record, 150)).unwrap().len(), 1);
}

#[test]
fn detector_push_counts_frames() {
    let data = small_dataset(3);
    let ck = calibrated_checkpoint(&data, Precision::F32, EpsMode::Zero);
    let scorer = Scorer::calibrated(&ck).unwrap();
    let mut det = Detector::new(&scorer, detector_config(0.0)).unwrap();
    let record = &data.records[1];
    let verdicts: Vec<Verdict> = (0..record.len()).filter_map(|t| det.push(record.frames.row(t)).unwrap()).collect();
    assert_eq!(det.frames_received(), 300);
    assert_eq!(verdicts.len(), 4);
    assert!(matches!(det.push(&[0.0; 3]), Err(Error::Stream(_))));
}

#[test]
fn malformed_streams_halt() {
    let data = small_dataset(4);
    let ck = calibrated_checkpoint(&data, Precision::F32, EpsMode::Zero);
    let scorer = Scorer::calibrated(&ck).unwrap();
    let record = &data.records[0];

    let mut short_row = replay_lines(record, 160);
    short_row.push_str("160,1.0,2.0\n");
    assert!(matches!(run_stream(&scorer, &short_row), Err(Error::Stream(_))));

    let gap = replay_lines(record, 10).replace("\n5,", "\n6,");
    assert!(matches!(run_stream(&scorer, &gap), Err(Error::Stream(_))));

    let mut nan = replay_lines(record, 3);
    nan.push_str(&format!("3{}\n", ",NaN".repeat(12)));
    assert!(matches!(run_stream(&scorer, &nan), Err(Error::Stream(_))));
}

#[test]
fn detector_requires_calibration_and_matching_window() {
    let data = small_dataset(5);
    let ck = calibrated_checkpoint(&data, Precision::F32, EpsMode::Zero);
    let uncalibrated = Scorer::new(&ck, Precision::F32, EpsMode::Zero).unwrap();
    assert!(matches!(Detector::new(&uncalibrated, detector_config(1.0)), Err(Error::Calibration(_))));

    let scorer = Scorer::calibrated(&ck).unwrap();
    let cfg = DetectorConfig { windowing: WindowingConfig::new(100, 50).unwrap(), ..detector_config(1.0) };
    assert!(matches!(Detector::new(&scorer, cfg), Err(Error::Config(_))));
    assert!(Detector::new(&scorer, detector_config(f64::NAN)).is_err());
}

mod counts {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn verdict_count_follows_window_formula(frames in 0usize..=300, stride in 1usize..=150) {
            let data = small_dataset(6);
            let ck = calibrated_checkpoint(&data, Precision::F32, EpsMode::Zero);
            let scorer = Scorer::calibrated(&ck).unwrap();
            let cfg = DetectorConfig { windowing: WindowingConfig::new(150, stride).unwrap(), ..detector_config(0.0) };
            let mut det = Detector::new(&scorer, cfg).unwrap();
            let record = &data.records[0];
            let emitted = (0..frames).filter(|&t| det.push(record.frames.row(t)).unwrap().is_some()).count();
            let expected = if frames >= 150 { (frames - 150) / stride + 1 } else { 0 };
            prop_assert_eq!(emitted, expected);
        }
    }
}
