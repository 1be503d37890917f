use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::made::MadeMasks;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ParamArray, ParamTree, Role};

/// `y = x·W + b` with `W: in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamArray,
    pub b: ParamArray,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: ParamArray::zeros(vec![fan_in, fan_out], Role::Weight),
            b: ParamArray::zeros(vec![fan_out], Role::Bias),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape[1]
    }
}

/// Single-layer LSTM with gate blocks ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `N × 4H`
    pub w_x: ParamArray,
    /// `H × 4H`
    pub w_h: ParamArray,
    /// `4H`
    pub b: ParamArray,
}

/// One flow layer: a MADE producing the autoregressive shift.
#[derive(Clone, Debug, PartialEq)]
pub struct MadeLayer {
    pub w1: ParamArray,
    pub b1: ParamArray,
    pub w2: ParamArray,
    pub b2: ParamArray,
    pub masks: MadeMasks,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub lstm: LstmParams,
    pub mu_head: Linear,
    pub logvar_head: Linear,
    pub flows: Vec<MadeLayer>,
    pub dec_hidden: Linear,
    pub dec_out: Linear,
}

/// Number of leading arrays in [`GeneratorParams`] order that belong to the
/// encoder (LSTM and both distribution heads).
pub const ENCODER_ARRAYS: usize = 7;

impl GeneratorParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, h, d) = (cfg.n_signals, cfg.hidden_size, cfg.latent_size);
        let flows = (0..cfg.flow_layers)
            .map(|_| {
                Ok(MadeLayer {
                    w1: ParamArray::zeros(vec![d, cfg.made_hidden], Role::Weight),
                    b1: ParamArray::zeros(vec![cfg.made_hidden], Role::Bias),
                    w2: ParamArray::zeros(vec![cfg.made_hidden, d], Role::Weight),
                    b2: ParamArray::zeros(vec![d], Role::Bias),
                    masks: MadeMasks::new(d, cfg.made_hidden)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lstm: LstmParams {
                w_x: ParamArray::zeros(vec![n, 4 * h], Role::Weight),
                w_h: ParamArray::zeros(vec![h, 4 * h], Role::Weight),
                b: ParamArray::zeros(vec![4 * h], Role::Bias),
            },
            mu_head: Linear::zeros(h, d),
            logvar_head: Linear::zeros(h, d),
            flows,
            dec_hidden: Linear::zeros(d, h),
            dec_out: Linear::zeros(h, cfg.window * n),
        })
    }

    /// Uniform in `±1/√fan_in` per array, seeded.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_size;
        fill(&mut p.lstm.w_x, cfg.n_signals, &mut rng);
        fill(&mut p.lstm.w_h, h, &mut rng);
        fill(&mut p.lstm.b, h, &mut rng);
        for lin in [&mut p.mu_head, &mut p.logvar_head] {
            init_linear(lin, &mut rng);
        }
        for f in &mut p.flows {
            let (d, hm) = (cfg.latent_size, cfg.made_hidden);
            fill(&mut f.w1, d, &mut rng);
            fill(&mut f.b1, d, &mut rng);
            fill(&mut f.w2, hm, &mut rng);
            fill(&mut f.b2, hm, &mut rng);
        }
        init_linear(&mut p.dec_hidden, &mut rng);
        init_linear(&mut p.dec_out, &mut rng);
        Ok(p)
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["lstm.w_x", "lstm.w_h", "lstm.b", "mu.w", "mu.b", "logvar.w", "logvar.b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for k in 0..self.flows.len() {
            for part in ["w1", "b1", "w2", "b2"] {
                v.push(format!("flow{k}.{part}"));
            }
        }
        v.extend(["dec_hidden.w", "dec_hidden.b", "dec_out.w", "dec_out.b"].iter().map(|s| s.to_string()));
        v
    }

    pub fn encoder_arrays(&self) -> Vec<&ParamArray> {
        self.arrays().into_iter().take(ENCODER_ARRAYS).collect()
    }

    /// Checks every array against `cfg` and the MADE mask law.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = Self::zeros(cfg)?;
        if reference.flows.len() != self.flows.len() {
            return Err(Error::Config(format!(
                "generator has {} flow layers, config expects {}",
                self.flows.len(),
                reference.flows.len()
            )));
        }
        for ((a, b), name) in self.arrays().iter().zip(reference.arrays()).zip(self.names()) {
            if a.shape != b.shape {
                return Err(Error::Shape(format!("{name}: {:?}, config expects {:?}", a.shape, b.shape)));
            }
            if !a.is_finite() {
                return Err(Error::Checkpoint(format!("{name} contains non-finite values")));
            }
        }
        for f in &self.flows {
            f.masks.validate()?;
            if f.masks != MadeMasks::new(cfg.latent_size, cfg.made_hidden)? {
                return Err(Error::Config("MADE masks do not match the configured degrees".into()));
            }
        }
        Ok(())
    }
}

fn fill(a: &mut ParamArray, fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in &mut a.values {
        *v = rng.random_range(-bound..bound);
    }
}

fn init_linear(lin: &mut Linear, rng: &mut ChaCha8Rng) {
    let fan_in = lin.fan_in();
    fill(&mut lin.w, fan_in, rng);
    fill(&mut lin.b, fan_in, rng);
}

impl ParamTree for GeneratorParams {
    fn arrays(&self) -> Vec<&ParamArray> {
        let mut v = vec![
            &self.lstm.w_x,
            &self.lstm.w_h,
            &self.lstm.b,
            &self.mu_head.w,
            &self.mu_head.b,
            &self.logvar_head.w,
            &self.logvar_head.b,
        ];
        for f in &self.flows {
            v.extend([&f.w1, &f.b1, &f.w2, &f.b2]);
        }
        v.extend([&self.dec_hidden.w, &self.dec_hidden.b, &self.dec_out.w, &self.dec_out.b]);
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut ParamArray> {
        let mut v = vec![
            &mut self.lstm.w_x,
            &mut self.lstm.w_h,
            &mut self.lstm.b,
            &mut self.mu_head.w,
            &mut self.mu_head.b,
            &mut self.logvar_head.w,
            &mut self.logvar_head.b,
        ];
        for f in &mut self.flows {
            v.extend([&mut f.w1, &mut f.b1, &mut f.w2, &mut f.b2]);
        }
        v.extend([&mut self.dec_hidden.w, &mut self.dec_hidden.b, &mut self.dec_out.w, &mut self.dec_out.b]);
        v
    }
}

/// MLP over latent vectors with rectified hidden layers and a single logit.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub layers: Vec<Linear>,
}

impl DiscriminatorParams {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![cfg.latent_size];
        dims.extend(&cfg.disc_widths);
        dims.push(1);
        Ok(Self { layers: dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect() })
    }

    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut p.layers {
            init_linear(l, &mut rng);
        }
        Ok(p)
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.layers.len()).flat_map(|k| [format!("disc{k}.w"), format!("disc{k}.b")]).collect()
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = Self::zeros(cfg)?;
        if reference.layers.len() != self.layers.len() {
            return Err(Error::Config("discriminator depth does not match config".into()));
        }
        for ((a, b), name) in self.arrays().iter().zip(reference.arrays()).zip(self.names()) {
            if a.shape != b.shape {
                return Err(Error::Shape(format!("{name}: {:?}, config expects {:?}", a.shape, b.shape)));
            }
            if !a.is_finite() {
                return Err(Error::Checkpoint(format!("{name} contains non-finite values")));
            }
        }
        Ok(())
    }
}

impl ParamTree for DiscriminatorParams {
    fn arrays(&self) -> Vec<&ParamArray> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut ParamArray> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::new(3, 8);
        let a = GeneratorParams::init(&cfg, 1).unwrap();
        assert_eq!(a, GeneratorParams::init(&cfg, 1).unwrap());
        assert_ne!(a, GeneratorParams::init(&cfg, 2).unwrap());
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.lstm.w_x.values.iter().all(|v| v.abs() <= bound));
        assert_eq!(a.names().len(), a.arrays().len());
        a.check(&cfg).unwrap();
    }

    #[test]
    fn discriminator_shapes() {
        let cfg = ModelConfig::new(3, 8);
        let d = DiscriminatorParams::init(&cfg, 0).unwrap();
        assert_eq!(d.layers.len(), 3);
        assert_eq!(d.layers[0].fan_in(), 6);
        assert_eq!(d.layers[2].fan_out(), 1);
        assert_eq!(d.names().len(), d.arrays().len());
    }

    #[test]
    fn check_rejects_wrong_shape() {
        let cfg = ModelConfig::new(3, 8);
        let g = GeneratorParams::init(&cfg, 1).unwrap();
        let other = ModelConfig::new(4, 8);
        assert!(g.check(&other).is_err());
    }
}
