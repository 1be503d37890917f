//! Adversarial training of the generator and discriminator: reconstruction,
//! encoder sparsity and latent alignment losses, β annealing and the prior
//! buffer fed by earlier latent codes.

mod losses;
mod prior;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_normalization, fit_normalization, sliding_windows, Dataset, WindowingConfig};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, CheckpointMeta, DiscriminatorParams, GeneratorParams, ModelConfig};
use crate::numerics::{
    adamw_step, lr_schedule, AdamWConfig, Bind, GradientMap, Matrix, OptimizerState, ScheduleConfig, Tape,
};

pub use losses::{
    loss_adversarial_g, loss_discriminator, loss_generator, loss_mse, loss_sparsity, window_losses_tape, LossTerms,
    WindowLossVars, P_MIN,
};
pub use prior::{sample_prior, PriorBuffer, PRIOR_CAPACITY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Records per optimizer step.
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    pub adamw: AdamWConfig,
    /// Encoder L1 coefficient; ignored when the model disables sparsity.
    pub lambda: f64,
    /// Adversarial weight reached at the final epoch.
    pub beta_max: f64,
    pub prior_capacity: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 8,
            schedule: ScheduleConfig::default(),
            adamw: AdamWConfig::default(),
            lambda: 1e-4,
            beta_max: 1.0,
            prior_capacity: PRIOR_CAPACITY,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.prior_capacity < 1 {
            return Err(Error::Config("epochs, batch_size and prior_capacity must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.beta_max >= 0.0 && self.beta_max.is_finite()) {
            return Err(Error::Config(format!(
                "lambda and beta_max must be finite and >= 0, got {} and {}",
                self.lambda, self.beta_max
            )));
        }
        self.schedule.validate()
    }
}

/// Linear ramp from 0 at the first epoch to `beta_max` at the last.
pub fn beta_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.beta_max;
    }
    cfg.beta_max * (epoch.min(cfg.epochs - 1) as f64) / ((cfg.epochs - 1) as f64)
}

/// One line of the training log.
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_L_mse: f64,
    pub mean_L_l1: f64,
    pub mean_L_bce: f64,
    pub mean_L_D: f64,
    pub eta: f64,
    pub beta: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub log: Vec<EpochLog>,
    pub generator_steps: u64,
    pub discriminator_steps: u64,
}

struct WindowOutcome {
    terms: LossTerms,
    loss_d: f64,
    gen_grad: GradientMap,
    disc_grad: GradientMap,
    zk: Vec<f64>,
}

fn window_seed(seed: u64, epoch: usize, batch: usize, window: usize) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    for (chunk, v) in bytes.chunks_exact_mut(8).zip([seed, epoch as u64, batch as u64, window as u64]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    bytes
}

#[allow(clippy::too_many_arguments)]
fn window_pass(
    cfg: &ModelConfig,
    gen: &GeneratorParams,
    disc: &DiscriminatorParams,
    window: &Matrix,
    eps: &[f64],
    prior: &[f64],
    lambda: f64,
    beta: f64,
) -> Result<WindowOutcome> {
    let mut tape = Tape::new();
    let gv = gen.bind(&mut tape);
    let dv = disc.bind(&mut tape);
    let vars = window_losses_tape(&mut tape, cfg, gen, &gv, &dv, window, eps, prior, lambda, beta)?;
    tape.check_finite()?;
    let mut g = tape.backward(vars.generator);
    let gen_grad = GradientMap(GeneratorParams::leaves(&gv).into_iter().map(|v| g.take(v)).collect());
    let mut d = tape.backward(vars.discriminator);
    let disc_grad = GradientMap(DiscriminatorParams::leaves(&dv).into_iter().map(|v| d.take(v)).collect());
    if !gen_grad.is_finite() || !disc_grad.is_finite() {
        return Err(Error::NonFinite { op: "backward" });
    }
    Ok(WindowOutcome {
        terms: LossTerms {
            mse: tape.scalar(vars.mse),
            l1: tape.scalar(vars.l1),
            bce: tape.scalar(vars.bce),
            total: tape.scalar(vars.generator),
        },
        loss_d: tape.scalar(vars.discriminator),
        gen_grad,
        disc_grad,
        zk: tape.value(vars.pass.zk).data.clone(),
    })
}

/// Trains from seeded initial parameters on already normalized records.
pub fn train(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    windowing: &WindowingConfig,
) -> Result<TrainOutcome> {
    let generator = GeneratorParams::init(model, cfg.seed)?;
    let discriminator = DiscriminatorParams::init(model, cfg.seed.wrapping_add(1))?;
    train_from(dataset, model, cfg, windowing, generator, discriminator)
}

/// Runs the training loop from the given parameters.
pub fn train_from(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    windowing: &WindowingConfig,
    mut generator: GeneratorParams,
    mut discriminator: DiscriminatorParams,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    windowing.validate()?;
    generator.check(model)?;
    discriminator.check(model)?;
    if windowing.window != model.window || dataset.n_signals != model.n_signals {
        return Err(Error::Config(format!(
            "data ({} signals, window {}) does not match the model ({} signals, window {})",
            dataset.n_signals, windowing.window, model.n_signals, model.window
        )));
    }
    if let Some(r) = dataset.records.iter().find(|r| r.label.is_anomalous()) {
        return Err(Error::Data(format!("training set contains anomalous record {}", r.sample_id)));
    }

    // windows grouped by record; short records contribute none
    let per_record: Vec<Vec<Matrix>> = dataset
        .records
        .iter()
        .filter(|r| r.len() >= windowing.window)
        .map(|r| Ok(sliding_windows(r, windowing)?.into_iter().map(|w| w.values).collect()))
        .collect::<Result<_>>()?;
    if per_record.is_empty() {
        return Err(Error::Data("no training record is long enough for one window".into()));
    }

    let lambda = if model.sparsity { cfg.lambda } else { 0.0 };
    let d = model.latent_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prior = PriorBuffer::new(cfg.prior_capacity, d)?;
    let mut g_state = OptimizerState::new(&generator, cfg.schedule.eta0, cfg.adamw);
    let mut d_state = OptimizerState::new(&discriminator, cfg.schedule.eta0, cfg.adamw);
    let mut order: Vec<usize> = (0..per_record.len()).collect();
    let started = Instant::now();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let eta = lr_schedule(epoch, &cfg.schedule);
        let beta = beta_schedule(epoch, cfg);
        g_state.lr = eta;
        d_state.lr = eta;
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut n_windows = 0usize;

        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&Matrix> = chunk.iter().flat_map(|&i| per_record[i].iter()).collect();
            let priors = sample_prior(&prior, windows.len(), &mut rng);
            let outcomes: Vec<WindowOutcome> = windows
                .par_iter()
                .zip(priors.par_iter())
                .enumerate()
                .map(|(k, (w, z_prior))| {
                    let mut wrng = ChaCha8Rng::from_seed(window_seed(cfg.seed, epoch, batch, k));
                    let eps: Vec<f64> = (0..d).map(|_| wrng.sample(StandardNormal)).collect();
                    window_pass(model, &generator, &discriminator, w, &eps, z_prior, lambda, beta)
                })
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::NonFinite { op } => Error::Training(format!(
                        "epoch {epoch} batch {batch}: non-finite value produced by `{op}` (eta {eta}, beta {beta})"
                    )),
                    other => other,
                })?;

            let mut g_grad = GradientMap::zeros_like(&generator);
            let mut d_grad = GradientMap::zeros_like(&discriminator);
            for o in &outcomes {
                g_grad.accumulate(&o.gen_grad);
                d_grad.accumulate(&o.disc_grad);
                sums[0] += o.terms.mse;
                sums[1] += o.terms.l1;
                sums[2] += o.terms.bce;
                sums[3] += o.loss_d;
            }
            let inv = 1.0 / outcomes.len() as f64;
            g_grad.scale(inv);
            d_grad.scale(inv);
            n_windows += outcomes.len();

            adamw_step(&mut generator, &g_grad, &mut g_state)?;
            adamw_step(&mut discriminator, &d_grad, &mut d_state)?;
            for o in outcomes {
                prior.push(o.zk)?;
            }
        }

        let n = n_windows as f64;
        let entry = EpochLog {
            epoch,
            mean_L_mse: sums[0] / n,
            mean_L_l1: sums[1] / n,
            mean_L_bce: sums[2] / n,
            mean_L_D: sums[3] / n,
            eta,
            beta,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: mse {:.4} l1 {:.4} bce {:.4} disc {:.4}",
            entry.mean_L_mse,
            entry.mean_L_l1,
            entry.mean_L_bce,
            entry.mean_L_D
        );
        log.push(entry);
    }

    Ok(TrainOutcome { generator, discriminator, log, generator_steps: g_state.step, discriminator_steps: d_state.step })
}

/// Fits normalization on `raw`, trains, and packages an uncalibrated
/// checkpoint.
pub fn train_checkpoint(
    raw: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    windowing: &WindowingConfig,
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    let norm = fit_normalization(&raw.records)?;
    let normalized = raw.map_records(|r| apply_normalization(r, &norm))?;
    let out = train(&normalized, model, cfg, windowing)?;
    let ck = Checkpoint {
        config: model.clone(),
        norm,
        generator: out.generator,
        discriminator: out.discriminator,
        calibration: None,
        meta: CheckpointMeta::new(Some(cfg.seed), cfg.epochs),
    };
    Ok((ck, out.log))
}
