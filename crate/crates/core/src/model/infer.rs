//! Allocation-free forward pass for scoring, generic over `f32`/`f64`.

use num_traits::Float;

use super::made::made_apply;
use super::params::{DiscriminatorParams, GeneratorParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Every intermediate of one generator pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPass {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z0: Vec<f64>,
    pub zk: Vec<f64>,
    pub reconstruction: Matrix,
}

struct FlowWeights<F> {
    w1: Vec<F>,
    b1: Vec<F>,
    w2: Vec<F>,
    b2: Vec<F>,
}

/// Generator weights converted to `F`, with MADE masks folded in.
pub struct InferenceModel<F> {
    cfg: ModelConfig,
    wx: Vec<F>,
    wh: Vec<F>,
    b: Vec<F>,
    mu_w: Vec<F>,
    mu_b: Vec<F>,
    lv_w: Vec<F>,
    lv_b: Vec<F>,
    flows: Vec<FlowWeights<F>>,
    scale: F,
    dh_w: Vec<F>,
    dh_b: Vec<F>,
    do_w: Vec<F>,
    do_b: Vec<F>,
}

/// Working buffers reused across calls.
pub struct Scratch<F> {
    gates: Vec<F>,
    h: Vec<F>,
    c: Vec<F>,
    made_hidden: Vec<F>,
    shift: Vec<F>,
    dec_hidden: Vec<F>,
    pub mu: Vec<F>,
    pub logvar: Vec<F>,
    pub z0: Vec<F>,
    pub zk: Vec<F>,
}

fn conv<F: Float>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::from(x).expect("f64 converts to float")).collect()
}

#[inline]
fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `out = b + x·W` for row-major `W: in × out`.
#[inline]
fn affine_into<F: Float>(x: &[F], w: &[F], b: &[F], out: &mut [F]) {
    let n_out = b.len();
    out.copy_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o = *o + xi * wv;
        }
    }
}

impl<F: Float> InferenceModel<F> {
    pub fn new(cfg: &ModelConfig, p: &GeneratorParams) -> Result<Self> {
        p.check(cfg)?;
        let flows = p
            .flows
            .iter()
            .take(cfg.active_flow_layers())
            .map(|f| FlowWeights {
                w1: f.w1.values.iter().zip(&f.masks.encoder).map(|(w, m)| F::from(w * m).unwrap()).collect(),
                b1: conv(&f.b1.values),
                w2: f.w2.values.iter().zip(&f.masks.decoder).map(|(w, m)| F::from(w * m).unwrap()).collect(),
                b2: conv(&f.b2.values),
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            wx: conv(&p.lstm.w_x.values),
            wh: conv(&p.lstm.w_h.values),
            b: conv(&p.lstm.b.values),
            mu_w: conv(&p.mu_head.w.values),
            mu_b: conv(&p.mu_head.b.values),
            lv_w: conv(&p.logvar_head.w.values),
            lv_b: conv(&p.logvar_head.b.values),
            flows,
            scale: F::from((cfg.alpha_const as f64).exp()).unwrap(),
            dh_w: conv(&p.dec_hidden.w.values),
            dh_b: conv(&p.dec_hidden.b.values),
            do_w: conv(&p.dec_out.w.values),
            do_b: conv(&p.dec_out.b.values),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn scratch(&self) -> Scratch<F> {
        let (h, d) = (self.cfg.hidden_size, self.cfg.latent_size);
        Scratch {
            gates: vec![F::zero(); 4 * h],
            h: vec![F::zero(); h],
            c: vec![F::zero(); h],
            made_hidden: vec![F::zero(); self.cfg.made_hidden],
            shift: vec![F::zero(); d],
            dec_hidden: vec![F::zero(); h],
            mu: vec![F::zero(); d],
            logvar: vec![F::zero(); d],
            z0: vec![F::zero(); d],
            zk: vec![F::zero(); d],
        }
    }

    /// Runs the LSTM over a row-major `T_W × N` window and fills
    /// `s.mu`/`s.logvar` from the final hidden state.
    pub fn encode_into(&self, window: &[F], s: &mut Scratch<F>) -> Result<()> {
        let (t_w, n, h) = (self.cfg.window, self.cfg.n_signals, self.cfg.hidden_size);
        if window.len() != t_w * n {
            return Err(Error::Shape(format!("window has {} values, expected {}", window.len(), t_w * n)));
        }
        s.h.iter_mut().for_each(|v| *v = F::zero());
        s.c.iter_mut().for_each(|v| *v = F::zero());
        for t in 0..t_w {
            let x = &window[t * n..(t + 1) * n];
            affine_into(x, &self.wx, &self.b, &mut s.gates);
            for (j, &hj) in s.h.iter().enumerate() {
                let row = &self.wh[j * 4 * h..(j + 1) * 4 * h];
                for (g, &w) in s.gates.iter_mut().zip(row) {
                    *g = *g + hj * w;
                }
            }
            for k in 0..h {
                let i = sigmoid(s.gates[k]);
                let f = sigmoid(s.gates[h + k]);
                let g = s.gates[2 * h + k].tanh();
                let o = sigmoid(s.gates[3 * h + k]);
                s.c[k] = f * s.c[k] + i * g;
                s.h[k] = o * s.c[k].tanh();
            }
        }
        affine_into(&s.h, &self.mu_w, &self.mu_b, &mut s.mu);
        affine_into(&s.h, &self.lv_w, &self.lv_b, &mut s.logvar);
        Ok(())
    }

    /// `z0 = μ + exp(logσ²/2)·ε`, then the flow into `s.zk`. `None` means
    /// `ε = 0`.
    pub fn latent_into(&self, eps: Option<&[F]>, s: &mut Scratch<F>) -> Result<()> {
        let d = self.cfg.latent_size;
        let half = F::from(0.5).unwrap();
        match eps {
            None => s.z0.copy_from_slice(&s.mu),
            Some(e) => {
                if e.len() != d {
                    return Err(Error::Shape(format!("noise has length {}, expected {d}", e.len())));
                }
                for (((z, &m), &lv), &ek) in s.z0.iter_mut().zip(&s.mu).zip(&s.logvar).zip(e) {
                    *z = m + (lv * half).exp() * ek;
                }
            }
        }
        s.zk.copy_from_slice(&s.z0);
        for f in &self.flows {
            made_apply(&s.zk, &f.w1, &f.b1, &f.w2, &f.b2, &mut s.made_hidden, &mut s.shift);
            for (z, &m) in s.zk.iter_mut().zip(&s.shift) {
                *z = *z * self.scale + m;
            }
        }
        Ok(())
    }

    /// Decodes `s.zk` into `out` (`T_W·N` values, row-major).
    pub fn decode_into(&self, s: &mut Scratch<F>, out: &mut [F]) -> Result<()> {
        if out.len() != self.cfg.window * self.cfg.n_signals {
            return Err(Error::Shape("reconstruction buffer size".into()));
        }
        affine_into(&s.zk, &self.dh_w, &self.dh_b, &mut s.dec_hidden);
        for v in s.dec_hidden.iter_mut() {
            *v = v.max(F::zero());
        }
        out.copy_from_slice(&self.do_b);
        let width = out.len();
        for (k, &hk) in s.dec_hidden.iter().enumerate() {
            if hk == F::zero() {
                continue;
            }
            let row = &self.do_w[k * width..(k + 1) * width];
            for (o, &w) in out.iter_mut().zip(row) {
                *o = *o + hk * w;
            }
        }
        Ok(())
    }

    pub fn reconstruct_into(&self, window: &[F], eps: Option<&[F]>, s: &mut Scratch<F>, out: &mut [F]) -> Result<()> {
        self.encode_into(window, s)?;
        self.latent_into(eps, s)?;
        self.decode_into(s, out)
    }

    /// Full pass on an `f64` window, returning every intermediate.
    pub fn forward(&self, window: &Matrix, eps: Option<&[f64]>) -> Result<LatentPass> {
        if window.shape() != (self.cfg.window, self.cfg.n_signals) {
            return Err(Error::Shape(format!(
                "window is {:?}, model expects ({}, {})",
                window.shape(),
                self.cfg.window,
                self.cfg.n_signals
            )));
        }
        let w: Vec<F> = conv(&window.data);
        let e: Option<Vec<F>> = eps.map(conv);
        let mut s = self.scratch();
        let mut out = vec![F::zero(); w.len()];
        self.reconstruct_into(&w, e.as_deref(), &mut s, &mut out)?;
        let back = |v: &[F]| v.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<f64>>();
        Ok(LatentPass {
            mu: back(&s.mu),
            logvar: back(&s.logvar),
            z0: back(&s.z0),
            zk: back(&s.zk),
            reconstruction: Matrix { rows: self.cfg.window, cols: self.cfg.n_signals, data: back(&out) },
        })
    }
}

/// `z0 = μ + exp(logσ²/2) ⊙ ε`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::Shape("reparameterize needs congruent vectors".into()));
    }
    Ok(mu.iter().zip(logvar).zip(eps).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect())
}

/// Convenience `f64` generator pass.
pub fn generator_forward(
    cfg: &ModelConfig,
    params: &GeneratorParams,
    window: &Matrix,
    eps: Option<&[f64]>,
) -> Result<LatentPass> {
    InferenceModel::<f64>::new(cfg, params)?.forward(window, eps)
}

/// Discriminator probability for one latent vector.
pub fn discriminate(z: &[f64], params: &DiscriminatorParams) -> Result<f64> {
    let first = params.layers.first().ok_or_else(|| Error::Config("empty discriminator".into()))?;
    if z.len() != first.fan_in() {
        return Err(Error::Shape(format!("latent has length {}, expected {}", z.len(), first.fan_in())));
    }
    let mut x = z.to_vec();
    let last = params.layers.len() - 1;
    for (k, l) in params.layers.iter().enumerate() {
        let mut out = vec![0.0; l.fan_out()];
        affine_into(&x, &l.w.values, &l.b.values, &mut out);
        if k < last {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        x = out;
    }
    Ok(crate::numerics::sigmoid(x[0]))
}
