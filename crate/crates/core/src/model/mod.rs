//! Generator (LSTM encoder, Gaussian heads, masked autoregressive flow,
//! decoder) and discriminator networks.

pub mod checkpoint;
mod forward;
mod infer;
mod made;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION};
pub use forward::{discriminate_tape, generator_forward_tape, DiscriminatorVars, GeneratorVars, TapePass};
pub use infer::{discriminate, generator_forward, reparameterize, InferenceModel, LatentPass, Scratch};
pub use made::{made_forward, maf_forward, maf_inverse, MadeMasks};
pub use params::{DiscriminatorParams, GeneratorParams, Linear, LstmParams, MadeLayer, ENCODER_ARRAYS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Signals per frame `N`.
    pub n_signals: usize,
    /// Window length `T_W`.
    pub window: usize,
    /// LSTM hidden width; also the decoder's hidden width.
    pub hidden_size: usize,
    /// Latent dimension `D_z`.
    pub latent_size: usize,
    /// Number of flow layers `K`.
    pub flow_layers: usize,
    pub made_hidden: usize,
    pub disc_widths: Vec<usize>,
    /// Fixed log-scale of every flow layer.
    pub alpha_const: u32,
    /// L1 penalty on the encoder is active.
    pub sparsity: bool,
    /// Flow layers are applied; when false `z_K = z_0`.
    pub flow: bool,
}

impl ModelConfig {
    /// Defaults for `N` signals: hidden and latent widths `2·N`, three flow
    /// layers with MADE width `2·D_z`, two discriminator layers of `2·D_z`.
    pub fn new(n_signals: usize, window: usize) -> Self {
        Self::with_sizes(n_signals, window, 2 * n_signals, 2 * n_signals)
    }

    pub fn with_sizes(n_signals: usize, window: usize, hidden_size: usize, latent_size: usize) -> Self {
        Self {
            n_signals,
            window,
            hidden_size,
            latent_size,
            flow_layers: 3,
            made_hidden: 2 * latent_size,
            disc_widths: vec![2 * latent_size, 2 * latent_size],
            alpha_const: 0,
            sparsity: true,
            flow: true,
        }
    }

    /// Flow layers actually applied.
    pub fn active_flow_layers(&self) -> usize {
        if self.flow {
            self.flow_layers
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("n_signals", self.n_signals),
            ("window", self.window),
            ("hidden_size", self.hidden_size),
            ("latent_size", self.latent_size),
            ("made_hidden", self.made_hidden),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be >= 1")));
            }
        }
        if self.disc_widths.contains(&0) {
            return Err(Error::Config("discriminator widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_double_signal_count() {
        let c = ModelConfig::new(12, 150);
        assert_eq!(c.hidden_size, 24);
        assert_eq!(c.latent_size, 24);
        assert_eq!(c.made_hidden, 48);
        assert_eq!(c.disc_widths, vec![48, 48]);
        assert_eq!(c.flow_layers, 3);
        assert_eq!(c.alpha_const, 0);
    }

    #[test]
    fn zero_sizes_rejected() {
        let mut c = ModelConfig::new(3, 8);
        c.latent_size = 0;
        assert!(c.validate().is_err());
    }
}
