//! Trains on synthetic normal records, saves the checkpoint and reloads it.
//!
//! `cargo run --release --example train_model -- [epochs] [out.bin]`

use mafaae::data::{split_train_test, synth_generate, SynthConfig, WindowingConfig};
use mafaae::model::{load_checkpoint, save_checkpoint, ModelConfig};
use mafaae::training::{train_checkpoint, TrainConfig};

fn main() -> mafaae::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let out = args.next().unwrap_or_else(|| "model.bin".into());

    let data = synth_generate(&SynthConfig::default())?;
    let (train, _) = split_train_test(&data, 200)?;
    let windowing = WindowingConfig::default();
    let model = ModelConfig::new(train.n_signals, windowing.window);
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };

    let (ck, log) = train_checkpoint(&train, &model, &cfg, &windowing)?;
    for e in &log {
        println!(
            "epoch {:2}  lr {:.1e}  beta {:.2}  mse {:8.3}  l1 {:.4}  adv {:.4}  disc {:.4}  {:.1}s",
            e.epoch, e.eta, e.beta, e.mean_L_mse, e.mean_L_l1, e.mean_L_bce, e.mean_L_D, e.wall_time_s
        );
    }
    save_checkpoint(&ck, out.as_ref())?;
    assert_eq!(load_checkpoint(out.as_ref())?, ck);
    println!("saved {out}; calibrate it before scoring");
    Ok(())
}
