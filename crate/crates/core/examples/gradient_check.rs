//! Checks the taped gradients of both adversarial losses against central
//! differences on a toy model.
//!
//! `cargo run --example gradient_check`

use mafaae::model::{DiscriminatorParams, GeneratorParams, ModelConfig};
use mafaae::numerics::{finite_diff_check, value_and_grad, Bind, Matrix, ParamTree};
use mafaae::training::window_losses_tape;

fn main() -> mafaae::Result<()> {
    let mut cfg = ModelConfig::with_sizes(3, 8, 6, 6);
    cfg.flow_layers = 2;
    let gen = GeneratorParams::init(&cfg, 1)?;
    let disc = DiscriminatorParams::init(&cfg, 2)?;
    let window = Matrix::new(8, 3, (0..24).map(|k| (k as f64 * 0.7).sin()).collect())?;
    let eps = [0.3, -0.1, 0.8, 0.0, -0.5, 0.2];
    let prior = [0.1, 0.4, -0.3, 0.9, -0.2, 0.0];

    let (loss, grads) = value_and_grad(&gen, |tape, gv| {
        let dv = disc.bind(tape);
        Ok(window_losses_tape(tape, &cfg, &gen, gv, &dv, &window, &eps, &prior, 1e-3, 0.5)?.generator)
    })?;
    println!("generator loss {loss:.6}, {} parameters, largest |grad| {:.4}", gen.num_values(), grads.max_abs());

    // central differences balance truncation and round-off near step ≈ ε^(1/3)
    let step = 1e-5;
    let g_err = finite_diff_check(
        &gen,
        |tape, gv| {
            let dv = disc.bind(tape);
            Ok(window_losses_tape(tape, &cfg, &gen, gv, &dv, &window, &eps, &prior, 1e-3, 0.5)?.generator)
        },
        step,
    )?;
    let d_err = finite_diff_check(
        &disc,
        |tape, dv| {
            let gv = gen.bind(tape);
            Ok(window_losses_tape(tape, &cfg, &gen, &gv, dv, &window, &eps, &prior, 1e-3, 0.5)?.discriminator)
        },
        step,
    )?;
    println!("max relative error: generator {g_err:.2e}, discriminator {d_err:.2e}");
    Ok(())
}
