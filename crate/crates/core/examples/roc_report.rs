//! Per-type AUROC and the ROC curve for a hand-made set of record scores.
//!
//! `cargo run --example roc_report`

use mafaae::evaluation::{auroc, per_type_auroc, roc_curve, trapezoid_area};

fn main() -> mafaae::Result<()> {
    let records = [
        (0.10, None),
        (0.40, None),
        (0.22, None),
        (0.30, None),
        (0.35, Some("spike")),
        (0.80, Some("spike")),
        (0.40, Some("drift")),
        (0.95, Some("dropout")),
    ];
    let scores: Vec<f64> = records.iter().map(|r| r.0).collect();
    let labels: Vec<bool> = records.iter().map(|r| r.1.is_some()).collect();

    let curve = roc_curve(&scores, &labels)?;
    for p in &curve {
        println!("threshold {:>5}  fpr {:.2}  tpr {:.2}", p.threshold, p.fpr, p.tpr);
    }
    println!("pooled AUROC {} (trapezoid {})", auroc(&scores, &labels)?, trapezoid_area(&curve));

    let types = per_type_auroc(records.iter().copied())?;
    for (kind, a) in &types.per_type {
        println!("{kind:8} {a:.3}");
    }
    println!("overall {:.3} ± {:.3}", types.overall_mean, types.overall_std);
    Ok(())
}
