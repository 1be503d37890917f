use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// One operating point. The first point of a curve has an infinite
/// threshold and sits at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    /// Records with score `≥ threshold` are flagged.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("AUROC needs both normal and anomalous records".into()));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed by sorting; `O(n log n)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let order = descending(scores);
    // walk groups of equal score from high to low; `neg_above` negatives
    // strictly outrank the current group
    let mut neg_above = 0usize;
    let mut wins_x2 = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        // each positive here beats every negative below and ties with n
        let below = neg - neg_above - n;
        wins_x2 += (p as u128) * (2 * below as u128 + n as u128);
        neg_above += n;
        i = j;
    }
    Ok(wins_x2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Curve from `(0,0)` to `(1,1)` with one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(scores, labels)?;
    let order = descending(scores);
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(points)
}

/// Trapezoidal area under a curve.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// AUROC of every anomaly type against all normal records, with the
/// unweighted mean and sample standard deviation across types.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeAurocs {
    pub per_type: BTreeMap<String, f64>,
    pub overall_mean: f64,
    /// Sample standard deviation (`n − 1`); 0 for a single type.
    pub overall_std: f64,
}

/// `records` yields `(score, anomaly_type)` with `None` for normal records.
pub fn per_type_auroc<'a>(records: impl IntoIterator<Item = (f64, Option<&'a str>)>) -> Result<TypeAurocs> {
    let mut normal = Vec::new();
    let mut by_type: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (score, kind) in records {
        match kind {
            None => normal.push(score),
            Some(k) => by_type.entry(k).or_default().push(score),
        }
    }
    if normal.is_empty() || by_type.is_empty() {
        return Err(Error::Data("per-type AUROC needs normal records and at least one anomaly type".into()));
    }
    let mut per_type = BTreeMap::new();
    for (kind, anomalous) in by_type {
        let scores: Vec<f64> = anomalous.iter().chain(&normal).copied().collect();
        let labels: Vec<bool> = (0..scores.len()).map(|i| i < anomalous.len()).collect();
        per_type.insert(kind.to_string(), auroc(&scores, &labels)?);
    }
    let values: Vec<f64> = per_type.values().copied().collect();
    let (overall_mean, overall_std) = mean_and_sample_std(&values);
    Ok(TypeAurocs { per_type, overall_mean, overall_std })
}

pub(crate) fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pairwise definition, `O(n²)`.
    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn hand_examples() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &labels).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.3, 0.4], &labels).unwrap(), 1.0);
        assert_eq!(auroc(&[0.4, 0.3, 0.2, 0.1], &labels).unwrap(), 0.0);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn separated_and_tied_curves() {
        let labels = [false, false, true, true];
        let sep = roc_curve(&[0.1, 0.2, 0.3, 0.4], &labels).unwrap();
        assert!(sep.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        let flat = roc_curve(&[0.5; 4], &labels).unwrap();
        assert_eq!(flat.len(), 2);
        assert_eq!((flat[1].fpr, flat[1].tpr), (1.0, 1.0));
        assert_eq!(trapezoid_area(&flat), 0.5);
    }

    #[test]
    fn per_type_examples() {
        // one type: overall equals it, std 0
        let recs = [(0.9, Some("spike")), (0.1, None), (0.2, None)];
        let t = per_type_auroc(recs.iter().copied()).unwrap();
        assert_eq!(t.overall_mean, 1.0);
        assert_eq!(t.overall_std, 0.0);

        // two types at 0.8 and 0.6 regardless of size
        let mut recs: Vec<(f64, Option<&str>)> = (0..5).map(|k| (k as f64, None)).collect();
        // a: beats 4 of 5 normals -> 0.8
        recs.push((3.5, Some("a")));
        // b: beats 3 of 5 normals, three copies -> 0.6
        for _ in 0..3 {
            recs.push((2.5, Some("b")));
        }
        let t = per_type_auroc(recs.iter().copied()).unwrap();
        assert!((t.per_type["a"] - 0.8).abs() < 1e-15);
        assert!((t.per_type["b"] - 0.6).abs() < 1e-15);
        assert!((t.overall_mean - 0.7).abs() < 1e-15);
        assert!((t.overall_std - (0.02f64).sqrt()).abs() < 1e-12);
        assert!(per_type_auroc([(1.0, None)]).is_err());
    }

    #[test]
    fn sample_std_over_two_types() {
        let values = [0.8, 0.6];
        let (m, s) = mean_and_sample_std(&values);
        assert!((m - 0.7).abs() < 1e-15);
        assert!((s - 0.141_421_356_237_309_5).abs() < 1e-12);
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60).prop_flat_map(|n| {
            (prop::collection::vec((0u8..12).prop_map(|k| k as f64 / 4.0), n), prop::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn sorted_trapezoid_and_pairwise_agree((scores, mut labels) in scored_labels()) {
            labels[0] = true;
            labels[1] = false;
            let a = auroc(&scores, &labels).unwrap();
            let curve = roc_curve(&scores, &labels).unwrap();
            prop_assert!((a - pairwise(&scores, &labels)).abs() < 1e-12);
            prop_assert!((trapezoid_area(&curve) - a).abs() < 1e-12);
            prop_assert!(curve.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
            let last = curve.last().unwrap();
            prop_assert_eq!((curve[0].fpr, curve[0].tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        }

        #[test]
        fn invariant_under_increasing_transform((scores, mut labels) in scored_labels()) {
            labels[0] = true;
            labels[1] = false;
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&warped, &labels).unwrap());
        }

        #[test]
        fn duplicating_a_type_keeps_overall(
            normals in prop::collection::vec(0.0f64..1.0, 1..10),
            a in prop::collection::vec(0.0f64..1.5, 1..6),
            b in prop::collection::vec(0.0f64..1.5, 1..6),
            copies in 2usize..4,
        ) {
            let base: Vec<(f64, Option<&str>)> = normals.iter().map(|&s| (s, None))
                .chain(a.iter().map(|&s| (s, Some("a"))))
                .chain(b.iter().map(|&s| (s, Some("b"))))
                .collect();
            let mut dup = base.clone();
            for _ in 1..copies {
                dup.extend(a.iter().map(|&s| (s, Some("a"))));
            }
            let x = per_type_auroc(base).unwrap();
            let y = per_type_auroc(dup).unwrap();
            prop_assert!((x.overall_mean - y.overall_mean).abs() < 1e-12);
        }
    }
}
