use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{classify, Scorer, Workspace};
use crate::data::WindowingConfig;
use crate::error::{Error, Result};

/// Frames buffered between the reader and the scoring loop.
const QUEUE_DEPTH: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub windowing: WindowingConfig,
    /// Frame rate used to derive the per-stride deadline.
    pub sample_rate_hz: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        self.windowing.validate()
    }

    /// Wall-clock time between two consecutive windows.
    pub fn stride_period(&self) -> Duration {
        Duration::from_secs_f64(self.windowing.stride as f64 / self.sample_rate_hz)
    }
}

/// Decision for one window. `is_anomaly ⟺ score > threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub window_start: usize,
    pub score: f64,
    pub is_anomaly: bool,
    pub inference_us: u64,
}

/// Ring buffer of the latest `T_W` frames that scores a window every `T_S`
/// frames once full.
pub struct Detector<'a> {
    scorer: &'a Scorer,
    config: DetectorConfig,
    ring: VecDeque<Vec<f64>>,
    frames: Vec<f64>,
    received: usize,
    workspace: Workspace,
    deadline_misses: usize,
}

impl<'a> Detector<'a> {
    pub fn new(scorer: &'a Scorer, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        scorer.calibration()?;
        if config.windowing.window != scorer.window() {
            return Err(Error::Config(format!(
                "detector window {} differs from the model's {}",
                config.windowing.window,
                scorer.window()
            )));
        }
        let w = config.windowing.window;
        Ok(Self {
            scorer,
            ring: VecDeque::with_capacity(w),
            frames: Vec::with_capacity(w * scorer.n_signals()),
            received: 0,
            workspace: scorer.workspace(),
            deadline_misses: 0,
            config,
        })
    }

    pub fn frames_received(&self) -> usize {
        self.received
    }

    pub fn deadline_misses(&self) -> usize {
        self.deadline_misses
    }

    /// Appends one frame; returns a verdict when a window completes.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<Verdict>> {
        let n = self.scorer.n_signals();
        if frame.len() != n {
            return Err(Error::Stream(format!(
                "frame {} has {} values, model expects {n}",
                self.received,
                frame.len()
            )));
        }
        let (w, s) = (self.config.windowing.window, self.config.windowing.stride);
        if self.ring.len() == w {
            let mut recycled = self.ring.pop_front().expect("ring is full");
            recycled.copy_from_slice(frame);
            self.ring.push_back(recycled);
        } else {
            self.ring.push_back(frame.to_vec());
        }
        self.received += 1;
        if self.received < w || !(self.received - w).is_multiple_of(s) {
            return Ok(None);
        }
        self.frames.clear();
        for f in &self.ring {
            self.frames.extend_from_slice(f);
        }
        let window_start = self.received - w;
        let started = Instant::now();
        let score = self.scorer.score_raw(&self.frames, window_start, &mut self.workspace)?;
        let elapsed = started.elapsed();
        if elapsed > self.config.stride_period() {
            self.deadline_misses += 1;
            log::warn!(
                "window {window_start}: inference took {elapsed:?}, longer than the stride period {:?}",
                self.config.stride_period()
            );
        }
        Ok(Some(Verdict {
            window_start,
            score,
            is_anomaly: classify(score, self.config.threshold),
            inference_us: elapsed.as_micros() as u64,
        }))
    }
}

/// Parses `frame_idx,sig_0,…,sig_{N−1}`.
pub fn parse_frame_line(line: &str, n_signals: usize) -> Result<(u64, Vec<f64>)> {
    let mut fields = line.split(',').map(str::trim);
    let idx = fields
        .next()
        .and_then(|f| f.parse::<u64>().ok())
        .ok_or_else(|| Error::Stream(format!("bad frame index in line {line:?}")))?;
    let values = fields
        .map(|f| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Stream(format!("frame {idx}: non-numeric or non-finite value {f:?}"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != n_signals {
        return Err(Error::Stream(format!("frame {idx} has {} values, model expects {n_signals}", values.len())));
    }
    Ok((idx, values))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub frames: usize,
    pub verdicts: usize,
    pub anomalies: usize,
    pub deadline_misses: usize,
}

/// Reads frames on a producer thread, scores them on the calling thread and
/// writes one JSON verdict per line. Frame indices must be consecutive.
/// Halts on the first malformed frame.
pub fn stream_detect<R, W>(input: R, scorer: &Scorer, config: DetectorConfig, mut out: W) -> Result<StreamSummary>
where
    R: BufRead + Send,
    W: Write,
{
    let mut detector = Detector::new(scorer, config)?;
    let n = scorer.n_signals();
    let (tx, rx) = mpsc::sync_channel::<Result<Vec<f64>>>(QUEUE_DEPTH);
    let mut summary = StreamSummary::default();

    std::thread::scope(|scope| -> Result<()> {
        scope.spawn(move || {
            let mut expected: Option<u64> = None;
            for line in input.lines() {
                let parsed = line.map_err(Error::from).and_then(|l| {
                    if l.trim().is_empty() {
                        return Ok(None);
                    }
                    let (idx, values) = parse_frame_line(&l, n)?;
                    if let Some(e) = expected {
                        if idx != e {
                            return Err(Error::Stream(format!("expected frame {e}, got {idx}")));
                        }
                    }
                    expected = Some(idx + 1);
                    Ok(Some(values))
                });
                let stop = parsed.is_err();
                match parsed.transpose() {
                    None => continue,
                    Some(item) => {
                        if tx.send(item).is_err() || stop {
                            return;
                        }
                    }
                }
            }
        });

        for item in rx {
            let frame = item?;
            if let Some(v) = detector.push(&frame)? {
                summary.verdicts += 1;
                summary.anomalies += v.is_anomaly as usize;
                serde_json::to_writer(&mut out, &v)?;
                out.write_all(b"\n")?;
            }
        }
        out.flush()?;
        Ok(())
    })?;

    summary.frames = detector.frames_received();
    summary.deadline_misses = detector.deadline_misses();
    Ok(summary)
}
