use num_traits::Float;

use super::params::MadeLayer;
use crate::error::{Error, Result};

/// Binary connectivity masks of a single-hidden-layer MADE.
///
/// Hidden unit `h` has degree `d_h = (h mod max(D−1, 1)) + 1`. Input `j`
/// (0-based) feeds hidden units with `j < d_h`; hidden unit `h` feeds output
/// `i` (0-based) when `d_h ≤ i`. Output `i` therefore sees only inputs
/// `0..i`, and output 0 is bias-only.
#[derive(Clone, Debug, PartialEq)]
pub struct MadeMasks {
    pub latent: usize,
    pub hidden: usize,
    /// `latent × hidden`, row-major.
    pub encoder: Vec<f64>,
    /// `hidden × latent`, row-major.
    pub decoder: Vec<f64>,
}

impl MadeMasks {
    pub fn new(latent: usize, hidden: usize) -> Result<Self> {
        if latent == 0 || hidden == 0 {
            return Err(Error::Config("MADE needs latent >= 1 and hidden >= 1".into()));
        }
        let cycle = latent.saturating_sub(1).max(1);
        let degrees: Vec<usize> = (0..hidden).map(|h| h % cycle + 1).collect();
        let mut encoder = vec![0.0; latent * hidden];
        let mut decoder = vec![0.0; hidden * latent];
        for (h, &d) in degrees.iter().enumerate() {
            for j in 0..latent {
                if j < d {
                    encoder[j * hidden + h] = 1.0;
                }
            }
            for i in 0..latent {
                if d <= i {
                    decoder[h * latent + i] = 1.0;
                }
            }
        }
        let masks = Self { latent, hidden, encoder, decoder };
        masks.validate()?;
        Ok(masks)
    }

    /// Path counts `P[j][i]` from input `j` to output `i` through the hidden
    /// layer, i.e. the product `M_encoder · M_decoder`.
    pub fn connectivity(&self) -> Vec<f64> {
        let (d, hm) = (self.latent, self.hidden);
        let mut p = vec![0.0; d * d];
        for j in 0..d {
            for h in 0..hm {
                let e = self.encoder[j * hm + h];
                if e == 0.0 {
                    continue;
                }
                for i in 0..d {
                    p[j * d + i] += e * self.decoder[h * d + i];
                }
            }
        }
        p
    }

    /// Exhaustive check that every mask entry is binary and that no path
    /// connects input `j` to output `i` unless `j < i`.
    pub fn validate(&self) -> Result<()> {
        let (d, hm) = (self.latent, self.hidden);
        if self.encoder.len() != d * hm || self.decoder.len() != hm * d {
            return Err(Error::Shape("MADE mask dimensions".into()));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Config("MADE masks must be binary".into()));
        }
        let p = self.connectivity();
        for j in 0..d {
            for i in 0..=j {
                if p[j * d + i] != 0.0 {
                    return Err(Error::Config(format!("MADE mask law violated: input {j} reaches output {i}")));
                }
            }
        }
        Ok(())
    }
}

/// Masked single-hidden-layer network with rectified hidden units. Weight
/// slices are already multiplied by their masks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn made_apply<F: Float>(z: &[F], w1: &[F], b1: &[F], w2: &[F], b2: &[F], hidden: &mut [F], out: &mut [F]) {
    let d = z.len();
    let hm = b1.len();
    hidden.copy_from_slice(b1);
    for j in 0..d {
        let zj = z[j];
        let row = &w1[j * hm..(j + 1) * hm];
        for (h, &w) in hidden.iter_mut().zip(row) {
            *h = *h + zj * w;
        }
    }
    for h in hidden.iter_mut() {
        *h = h.max(F::zero());
    }
    out.copy_from_slice(b2);
    for (k, &hk) in hidden.iter().enumerate() {
        if hk == F::zero() {
            continue;
        }
        let row = &w2[k * d..(k + 1) * d];
        for (o, &w) in out.iter_mut().zip(row) {
            *o = *o + hk * w;
        }
    }
}

fn masked(values: &[f64], mask: &[f64]) -> Vec<f64> {
    values.iter().zip(mask).map(|(v, m)| v * m).collect()
}

/// Autoregressive shift `μ_k(z)` of one flow layer.
pub fn made_forward(z: &[f64], layer: &MadeLayer) -> Result<Vec<f64>> {
    let d = layer.masks.latent;
    if z.len() != d {
        return Err(Error::Shape(format!("MADE input has length {}, expected {d}", z.len())));
    }
    let w1 = masked(&layer.w1.values, &layer.masks.encoder);
    let w2 = masked(&layer.w2.values, &layer.masks.decoder);
    let mut hidden = vec![0.0; layer.masks.hidden];
    let mut out = vec![0.0; d];
    made_apply(z, &w1, &layer.b1.values, &w2, &layer.b2.values, &mut hidden, &mut out);
    Ok(out)
}

/// `z_k = z_{k−1}·exp(α) + μ_k(z_{k−1})` for each layer in order.
pub fn maf_forward(z0: &[f64], layers: &[MadeLayer], alpha: u32) -> Result<Vec<f64>> {
    let scale = (alpha as f64).exp();
    let mut z = z0.to_vec();
    for layer in layers {
        let mu = made_forward(&z, layer)?;
        for (zi, m) in z.iter_mut().zip(mu) {
            *zi = *zi * scale + m;
        }
    }
    Ok(z)
}

/// Inverts [`maf_forward`] by solving each layer coordinate by coordinate in
/// autoregressive order, layers in reverse.
pub fn maf_inverse(zk: &[f64], layers: &[MadeLayer], alpha: u32) -> Result<Vec<f64>> {
    let inv_scale = (-(alpha as f64)).exp();
    let mut z = zk.to_vec();
    for layer in layers.iter().rev() {
        let d = z.len();
        let mut prev = vec![0.0; d];
        for i in 0..d {
            // output i depends only on prev[..i], which is already solved
            let mu = made_forward(&prev, layer)?;
            prev[i] = (z[i] - mu[i]) * inv_scale;
        }
        z = prev;
    }
    Ok(z)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::params::MadeLayer;
    use crate::numerics::{ParamArray, Role};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer_with(d: usize, hm: usize, f: &mut impl FnMut() -> f64) -> MadeLayer {
        let arr = |shape: Vec<usize>, role, f: &mut dyn FnMut() -> f64| {
            let n = shape.iter().product();
            ParamArray::new(shape, (0..n).map(|_| f()).collect(), role).unwrap()
        };
        MadeLayer {
            w1: arr(vec![d, hm], Role::Weight, f),
            b1: arr(vec![hm], Role::Bias, f),
            w2: arr(vec![hm, d], Role::Weight, f),
            b2: arr(vec![d], Role::Bias, f),
            masks: MadeMasks::new(d, hm).unwrap(),
        }
    }

    fn random_layer(d: usize, rng: &mut ChaCha8Rng) -> MadeLayer {
        layer_with(d, 2 * d, &mut || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mask_law_holds_exhaustively() {
        for d in 1..=64 {
            for hm in [1, d, 2 * d, 3 * d + 1] {
                let m = MadeMasks::new(d, hm).unwrap();
                m.validate().unwrap();
            }
        }
    }

    #[test]
    fn corrupted_mask_rejected() {
        let mut m = MadeMasks::new(4, 8).unwrap();
        for v in m.decoder.iter_mut() {
            *v = 1.0;
        }
        assert!(m.validate().is_err());
    }

    #[test]
    fn last_input_is_ignored_and_first_output_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = random_layer(5, &mut rng);
        let z: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let base = made_forward(&z, &layer).unwrap();
        let mut z2 = z.clone();
        z2[4] += 3.7;
        assert_eq!(made_forward(&z2, &layer).unwrap(), base);
        let other: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        assert_eq!(made_forward(&other, &layer).unwrap()[0], layer.b2.values[0]);
    }

    /// Central-difference Jacobian; entry `[i][j]` is `∂out_i/∂z_j`.
    fn numeric_jacobian(layer: &MadeLayer, z: &[f64], h: f64) -> Vec<Vec<f64>> {
        let d = z.len();
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let mut up = z.to_vec();
            let mut dn = z.to_vec();
            up[j] += h;
            dn[j] -= h;
            let fu = made_forward(&up, layer).unwrap();
            let fd = made_forward(&dn, layer).unwrap();
            for i in 0..d {
                jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn all_ones_jacobian_is_strictly_lower_triangular() {
        let layer = layer_with(3, 6, &mut || 1.0);
        let jac = numeric_jacobian(&layer, &[0.3, -0.2, 0.5], 1e-6);
        for i in 0..3 {
            for j in i..3 {
                assert!(jac[i][j].abs() < 1e-7, "J[{i}][{j}] = {}", jac[i][j]);
            }
        }
        // and the permitted entries are actually used
        assert!(jac[1][0].abs() > 0.5 && jac[2][0].abs() > 0.5 && jac[2][1].abs() > 0.5);
    }

    #[test]
    fn identity_and_bias_only_flows() {
        let d = 4;
        let zero = layer_with(d, 8, &mut || 0.0);
        let z: Vec<f64> = vec![0.5, -1.0, 2.0, 0.25];
        assert_eq!(maf_forward(&z, std::slice::from_ref(&zero), 0).unwrap(), z);
        assert_eq!(maf_inverse(&z, std::slice::from_ref(&zero), 0).unwrap(), z);

        let mut c1 = zero.clone();
        c1.b2.values = vec![1.0, 2.0, 3.0, 4.0];
        let out = maf_forward(&z, &[c1.clone()], 0).unwrap();
        assert_eq!(out, vec![1.5, 1.0, 5.0, 4.25]);

        let mut c2 = zero.clone();
        c2.b2.values = vec![-0.5, 0.5, 0.0, 1.0];
        let both = maf_forward(&z, &[c1.clone(), c2.clone()], 0).unwrap();
        let back = maf_inverse(&both, &[c1, c2], 0).unwrap();
        assert_eq!(back, z);

        let scaled = maf_forward(&z, &[zero.clone(), zero], 1).unwrap();
        for (s, x) in scaled.iter().zip(&z) {
            assert!((s - x * std::f64::consts::E.powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_flows_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for alpha in [0, 1] {
            let layers: Vec<MadeLayer> = (0..3).map(|_| random_layer(6, &mut rng)).collect();
            for _ in 0..100 {
                let z: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
                let fwd = maf_forward(&z, &layers, alpha).unwrap();
                let back = maf_inverse(&fwd, &layers, alpha).unwrap();
                for (a, b) in back.iter().zip(&z) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_made_jacobian_is_strictly_lower_triangular(d in 1usize..16, extra in 0usize..16, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = layer_with(d, d + extra, &mut || rng.random_range(-1.0..1.0));
            let z: Vec<f64> = (0..d).map(|k| (k as f64 * 0.37).sin()).collect();
            let jac = numeric_jacobian(&layer, &z, 1e-5);
            for i in 0..d {
                for j in i..d {
                    prop_assert!(jac[i][j].abs() < 1e-7);
                }
            }
        }
    }
}
