//! Compares the full model against the no-sparsity and no-flow variants on
//! one synthetic split.
//!
//! `cargo run --release --example ablation -- [seed]`

use mafaae::data::{split_train_test, synth_generate, SynthConfig};
use mafaae::evaluation::{run_ablation, Experiment};

fn main() -> mafaae::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = synth_generate(&SynthConfig { seed, ..SynthConfig::default() })?;
    let (train, test) = split_train_test(&data, 200)?;
    let results = run_ablation(&train, &test, &Experiment::new(data.n_signals, seed))?;
    for r in &results {
        println!(
            "{:12} overall {:.4} ± {:.4}  per type {:?}",
            r.variant.as_str(),
            r.report.overall_mean,
            r.report.overall_std,
            r.report.per_type
        );
    }
    Ok(())
}
