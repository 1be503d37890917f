//! Generates the synthetic benchmark and writes the train/test split as CSV
//! with JSON manifests.
//!
//! `cargo run --example generate_data -- <out_dir> [seed]`

use std::path::PathBuf;

use mafaae::data::{load_records, manifest_path, save_records, split_train_test, synth_generate, SynthConfig};

fn main() -> mafaae::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let data = synth_generate(&SynthConfig { seed, ..SynthConfig::default() })?;
    let (train, test) = split_train_test(&data, 200)?;
    std::fs::create_dir_all(&out)?;
    for (name, part) in [("train.csv", &train), ("test.csv", &test)] {
        let path = out.join(name);
        save_records(part, &path)?;
        // the files parse back to the same records
        assert_eq!(load_records(&path)?.records, part.records);
        println!("{} records -> {} (+ {})", part.records.len(), path.display(), manifest_path(&path).display());
    }
    for r in test.records.iter().filter(|r| r.anomaly_type.is_some()).take(3) {
        println!("{}: {} frames, {}", r.sample_id, r.len(), r.anomaly_type.as_deref().unwrap_or("-"));
    }
    Ok(())
}
