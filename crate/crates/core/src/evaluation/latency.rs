use std::time::Instant;

use serde::Serialize;

use crate::data::{Window, WindowingConfig};
use crate::detection::{Precision, Scorer};
use crate::error::{Error, Result};

/// Fewest timed inferences accepted for a report.
pub const MIN_TIMED: usize = 100;

/// Per-window scoring latency, single-threaded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub timings_us: Vec<f64>,
    pub q1_us: f64,
    pub q3_us: f64,
    /// Mean of the timings within `[q1, q3]`.
    pub iqr_mean_us: f64,
    pub warmup: usize,
    pub windowing: WindowingConfig,
    pub n_signals: usize,
    pub precision: Precision,
    pub threads: usize,
    pub hardware: String,
}

/// Quantile `p ∈ [0,1]` of ascending `sorted` by linear interpolation
/// between closest ranks (inclusive convention).
pub fn quantile_inclusive(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(q1, q3, mean of values in [q1, q3])`.
pub fn iqr_mean(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("iqr_mean needs finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_inclusive(&sorted, 0.25);
    let q3 = quantile_inclusive(&sorted, 0.75);
    let inner: Vec<f64> = sorted.iter().copied().filter(|&v| q1 <= v && v <= q3).collect();
    Ok((q1, q3, inner.iter().sum::<f64>() / inner.len() as f64))
}

fn hardware_note() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{}, {cores} logical cores", std::env::consts::ARCH, std::env::consts::OS)
}

/// Times `repetitions` full raw-window scorings on the calling thread after
/// `warmup` untimed ones, cycling through `windows`.
pub fn bench_latency(
    scorer: &Scorer,
    windows: &[Window],
    windowing: &WindowingConfig,
    warmup: usize,
    repetitions: usize,
) -> Result<LatencyReport> {
    if repetitions < MIN_TIMED {
        return Err(Error::Config(format!("latency benchmark needs at least {MIN_TIMED} timed runs")));
    }
    if windows.is_empty() {
        return Err(Error::Data("latency benchmark needs at least one window".into()));
    }
    let mut ws = scorer.workspace();
    let mut sink = 0.0;
    for k in 0..warmup {
        let w = &windows[k % windows.len()];
        sink += scorer.score_raw(&w.values.data, w.start, &mut ws)?;
    }
    let mut timings_us = Vec::with_capacity(repetitions);
    for k in 0..repetitions {
        let w = &windows[k % windows.len()];
        let t = Instant::now();
        sink += scorer.score_raw(&w.values.data, w.start, &mut ws)?;
        timings_us.push(t.elapsed().as_secs_f64() * 1e6);
    }
    std::hint::black_box(sink);
    let (q1_us, q3_us, iqr_mean_us) = iqr_mean(&timings_us)?;
    Ok(LatencyReport {
        timings_us,
        q1_us,
        q3_us,
        iqr_mean_us,
        warmup,
        windowing: *windowing,
        n_signals: scorer.n_signals(),
        precision: scorer.precision(),
        threads: 1,
        hardware: hardware_note(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartile_convention() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let (q1, q3, m) = iqr_mean(&v).unwrap();
        assert_eq!(q1, 2.75);
        assert_eq!(q3, 6.25);
        assert_eq!(m, 4.5);
    }

    #[test]
    fn outliers_are_excluded() {
        let mut v = vec![1.0; 20];
        v.push(1000.0);
        let (_, _, m) = iqr_mean(&v).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(quantile_inclusive(&[3.0], 0.25), 3.0);
    }
}
