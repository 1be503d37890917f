use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    discriminate, discriminate_tape, generator_forward_tape, DiscriminatorParams, DiscriminatorVars, GeneratorParams,
    GeneratorVars, LatentPass, ModelConfig, TapePass, ENCODER_ARRAYS,
};
use crate::numerics::{Bind, Matrix, ParamArray, Tape, Var};

/// Probabilities entering a log are clamped to `[P_MIN, 1 − P_MIN]`.
pub const P_MIN: f64 = 1e-7;

/// The three generator terms and their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub mse: f64,
    pub l1: f64,
    pub bce: f64,
    pub total: f64,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(P_MIN, 1.0 - P_MIN)
}

/// Sum of squared entrywise differences.
pub fn loss_mse(window: &Matrix, reconstruction: &Matrix) -> Result<f64> {
    if window.shape() != reconstruction.shape() {
        return Err(Error::Shape(format!("loss_mse of {:?} and {:?}", window.shape(), reconstruction.shape())));
    }
    Ok(window.data.iter().zip(&reconstruction.data).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `λ · Σ|w|` over the given arrays.
pub fn loss_sparsity(encoder: &[&ParamArray], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * encoder.iter().flat_map(|a| &a.values).map(|v| v.abs()).sum::<f64>()
}

/// `β · (−ln D(z_K))`.
pub fn loss_adversarial_g(zk: &[f64], disc: &DiscriminatorParams, beta: f64) -> Result<f64> {
    Ok(beta * -clamp_prob(discriminate(zk, disc)?).ln())
}

/// Generator objective of one window given its forward pass.
pub fn loss_generator(
    pass: &LatentPass,
    window: &Matrix,
    gen: &GeneratorParams,
    disc: &DiscriminatorParams,
    lambda: f64,
    beta: f64,
) -> Result<LossTerms> {
    let mse = loss_mse(window, &pass.reconstruction)?;
    let l1 = loss_sparsity(&gen.encoder_arrays(), lambda);
    let bce = loss_adversarial_g(&pass.zk, disc, beta)?;
    Ok(LossTerms { mse, l1, bce, total: mse + l1 + bce })
}

/// `½[mean −ln D(z_prior) + mean −ln(1 − D(z_K))]`.
pub fn loss_discriminator(prior: &[Vec<f64>], zk: &[Vec<f64>], disc: &DiscriminatorParams) -> Result<f64> {
    if prior.is_empty() || zk.is_empty() {
        return Err(Error::Shape("loss_discriminator needs non-empty batches".into()));
    }
    let mut real = 0.0;
    for z in prior {
        real -= clamp_prob(discriminate(z, disc)?).ln();
    }
    let mut fake = 0.0;
    for z in zk {
        fake -= (1.0 - clamp_prob(discriminate(z, disc)?)).ln();
    }
    Ok(0.5 * (real / prior.len() as f64 + fake / zk.len() as f64))
}

/// Tape roots and intermediates for one window.
#[derive(Clone, Copy, Debug)]
pub struct WindowLossVars {
    pub pass: TapePass,
    pub mse: Var,
    pub l1: Var,
    pub bce: Var,
    /// `mse + l1 + bce`; differentiate for generator gradients.
    pub generator: Var,
    /// Discriminator loss on this window's prior sample and detached `z_K`.
    pub discriminator: Var,
}

/// Records both losses of one window. The discriminator loss sees `z_K`
/// through a detached copy, so its gradient never reaches the generator.
#[allow(clippy::too_many_arguments)]
pub fn window_losses_tape(
    tape: &mut Tape,
    cfg: &ModelConfig,
    gen: &GeneratorParams,
    gv: &GeneratorVars,
    dv: &DiscriminatorVars,
    window: &Matrix,
    eps: &[f64],
    prior: &[f64],
    lambda: f64,
    beta: f64,
) -> Result<WindowLossVars> {
    let pass = generator_forward_tape(tape, cfg, gen, gv, window, eps)?;
    let x = tape.constant(window.clone());
    let diff = tape.sub(pass.reconstruction, x)?;
    let sq = tape.square(diff);
    let mse = tape.sum(sq);

    let l1 = if lambda > 0.0 {
        let mut acc: Option<Var> = None;
        for v in GeneratorParams::leaves(gv).into_iter().take(ENCODER_ARRAYS) {
            let a = tape.abs(v);
            let s = tape.sum(a);
            acc = Some(match acc {
                Some(prev) => tape.add(prev, s)?,
                None => s,
            });
        }
        let total = acc.expect("encoder has arrays");
        tape.scale(total, lambda)
    } else {
        tape.constant(Matrix::scalar(0.0))
    };

    let p = discriminate_tape(tape, dv, pass.zk)?;
    let pc = tape.clamp(p, P_MIN, 1.0 - P_MIN);
    let lp = tape.ln(pc);
    let bce = tape.scale(lp, -beta);

    let partial = tape.add(mse, l1)?;
    let generator = tape.add(partial, bce)?;

    let one = tape.constant(Matrix::scalar(1.0));
    let z_fixed = tape.detach(pass.zk);
    let z_prior = tape.constant(Matrix::row_vector(prior.to_vec()));
    let p_real = discriminate_tape(tape, dv, z_prior)?;
    let p_real = tape.clamp(p_real, P_MIN, 1.0 - P_MIN);
    let p_fake = discriminate_tape(tape, dv, z_fixed)?;
    let p_fake = tape.clamp(p_fake, P_MIN, 1.0 - P_MIN);
    let q_fake = tape.sub(one, p_fake)?;
    let ln_real = tape.ln(p_real);
    let ln_fake = tape.ln(q_fake);
    let both = tape.add(ln_real, ln_fake)?;
    let discriminator = tape.scale(both, -0.5);

    Ok(WindowLossVars { pass, mse, l1, bce, generator, discriminator })
}
