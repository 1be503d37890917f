//! Differentiable forward passes recorded on a [`Tape`] for training.

use super::params::{DiscriminatorParams, GeneratorParams, Linear};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Bind, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Clone, Debug)]
pub struct GeneratorVars {
    pub lstm_wx: Var,
    pub lstm_wh: Var,
    pub lstm_b: Var,
    pub mu: LinearVars,
    pub logvar: LinearVars,
    /// `[w1, b1, w2, b2]` per flow layer.
    pub flows: Vec<[Var; 4]>,
    pub dec_hidden: LinearVars,
    pub dec_out: LinearVars,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorVars {
    pub layers: Vec<LinearVars>,
}

fn bind_linear(tape: &mut Tape, l: &Linear) -> LinearVars {
    LinearVars { w: tape.param(l.w.to_matrix()), b: tape.param(l.b.to_matrix()) }
}

impl Bind for GeneratorParams {
    type Vars = GeneratorVars;

    fn bind(&self, tape: &mut Tape) -> GeneratorVars {
        let lstm_wx = tape.param(self.lstm.w_x.to_matrix());
        let lstm_wh = tape.param(self.lstm.w_h.to_matrix());
        let lstm_b = tape.param(self.lstm.b.to_matrix());
        let mu = bind_linear(tape, &self.mu_head);
        let logvar = bind_linear(tape, &self.logvar_head);
        let flows = self
            .flows
            .iter()
            .map(|f| {
                [
                    tape.param(f.w1.to_matrix()),
                    tape.param(f.b1.to_matrix()),
                    tape.param(f.w2.to_matrix()),
                    tape.param(f.b2.to_matrix()),
                ]
            })
            .collect();
        let dec_hidden = bind_linear(tape, &self.dec_hidden);
        let dec_out = bind_linear(tape, &self.dec_out);
        GeneratorVars { lstm_wx, lstm_wh, lstm_b, mu, logvar, flows, dec_hidden, dec_out }
    }

    fn leaves(v: &GeneratorVars) -> Vec<Var> {
        let mut out = vec![v.lstm_wx, v.lstm_wh, v.lstm_b, v.mu.w, v.mu.b, v.logvar.w, v.logvar.b];
        for f in &v.flows {
            out.extend_from_slice(f);
        }
        out.extend([v.dec_hidden.w, v.dec_hidden.b, v.dec_out.w, v.dec_out.b]);
        out
    }
}

impl Bind for DiscriminatorParams {
    type Vars = DiscriminatorVars;

    fn bind(&self, tape: &mut Tape) -> DiscriminatorVars {
        DiscriminatorVars { layers: self.layers.iter().map(|l| bind_linear(tape, l)).collect() }
    }

    fn leaves(v: &DiscriminatorVars) -> Vec<Var> {
        v.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }
}

/// Intermediates of one generator pass on a tape.
#[derive(Clone, Copy, Debug)]
pub struct TapePass {
    pub mu: Var,
    pub logvar: Var,
    pub z0: Var,
    pub zk: Var,
    pub reconstruction: Var,
}

fn affine(tape: &mut Tape, x: Var, l: LinearVars) -> Result<Var> {
    let xw = tape.matmul(x, l.w)?;
    tape.add_row(xw, l.b)
}

/// Encoder → reparameterization with the given noise → flow → decoder.
pub fn generator_forward_tape(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &GeneratorParams,
    vars: &GeneratorVars,
    window: &Matrix,
    eps: &[f64],
) -> Result<TapePass> {
    let (t_w, n, h, d) = (cfg.window, cfg.n_signals, cfg.hidden_size, cfg.latent_size);
    if window.shape() != (t_w, n) {
        return Err(Error::Shape(format!("window is {:?}, model expects ({t_w}, {n})", window.shape())));
    }
    if eps.len() != d {
        return Err(Error::Shape(format!("noise has length {}, expected {d}", eps.len())));
    }

    // LSTM; input projections for all steps in one product
    let x = tape.constant(window.clone());
    let xw = tape.matmul(x, vars.lstm_wx)?;
    let xwb = tape.add_row(xw, vars.lstm_b)?;
    let mut hs = tape.constant(Matrix::zeros(1, h));
    let mut cs = tape.constant(Matrix::zeros(1, h));
    for t in 0..t_w {
        let xt = tape.row(xwb, t)?;
        let hw = tape.matmul(hs, vars.lstm_wh)?;
        let a = tape.add(xt, hw)?;
        let i_pre = tape.slice_cols(a, 0, h)?;
        let f_pre = tape.slice_cols(a, h, h)?;
        let g_pre = tape.slice_cols(a, 2 * h, h)?;
        let o_pre = tape.slice_cols(a, 3 * h, h)?;
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, cs)?;
        let ig = tape.mul(i, g)?;
        cs = tape.add(fc, ig)?;
        let tc = tape.tanh(cs);
        hs = tape.mul(o, tc)?;
    }

    let mu = affine(tape, hs, vars.mu)?;
    let logvar = affine(tape, hs, vars.logvar)?;

    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let e = tape.constant(Matrix::row_vector(eps.to_vec()));
    let noise = tape.mul(sigma, e)?;
    let z0 = tape.add(mu, noise)?;

    let mut z = z0;
    let scale = (cfg.alpha_const as f64).exp();
    for (layer, fv) in params.flows.iter().zip(&vars.flows).take(cfg.active_flow_layers()) {
        let m1 = tape.constant(Matrix { rows: d, cols: cfg.made_hidden, data: layer.masks.encoder.clone() });
        let m2 = tape.constant(Matrix { rows: cfg.made_hidden, cols: d, data: layer.masks.decoder.clone() });
        let w1 = tape.mul(fv[0], m1)?;
        let w2 = tape.mul(fv[2], m2)?;
        let pre = affine(tape, z, LinearVars { w: w1, b: fv[1] })?;
        let hid = tape.relu(pre);
        let shift = affine(tape, hid, LinearVars { w: w2, b: fv[3] })?;
        let scaled = if cfg.alpha_const == 0 { z } else { tape.scale(z, scale) };
        z = tape.add(scaled, shift)?;
    }
    let zk = z;

    let pre = affine(tape, zk, vars.dec_hidden)?;
    let hid = tape.relu(pre);
    let flat = affine(tape, hid, vars.dec_out)?;
    let reconstruction = tape.reshape(flat, t_w, n)?;

    Ok(TapePass { mu, logvar, z0, zk, reconstruction })
}

/// Probability that `z` (a `1 × D` row) came from the prior.
pub fn discriminate_tape(tape: &mut Tape, vars: &DiscriminatorVars, z: Var) -> Result<Var> {
    let mut x = z;
    let last = vars.layers.len() - 1;
    for (k, l) in vars.layers.iter().enumerate() {
        let a = affine(tape, x, *l)?;
        x = if k == last { tape.sigmoid(a) } else { tape.relu(a) };
    }
    Ok(x)
}
