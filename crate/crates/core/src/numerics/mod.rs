//! Dense matrices, taped reverse-mode differentiation, AdamW and the
//! multi-step learning-rate schedule.

pub mod matrix;
pub mod optim;
pub mod params;
pub mod tape;

pub use matrix::Matrix;
pub use optim::{adamw_step, lr_schedule, AdamWConfig, OptimizerState, ScheduleConfig};
pub use params::{finite_diff_check, value, value_and_grad, Bind, GradientMap, ParamArray, ParamTree, Role};
pub use tape::{sigmoid, Gradients, Tape, Var};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_array(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> ParamArray {
        let vals = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
        ParamArray::new(vec![rows, cols], vals, Role::Weight).unwrap()
    }

    #[test]
    fn linear_least_squares_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let params = vec![random_array(&mut rng, 3, 4, 1.0)];
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |t: &mut Tape, vars: &Vec<Var>| -> Result<Var> {
                let vv = t.constant(Matrix::new(4, 1, v.clone())?);
                let yy = t.constant(Matrix::new(3, 1, y.clone())?);
                let wv = t.matmul(vars[0], vv)?;
                let r = t.sub(wv, yy)?;
                let sq = t.square(r);
                Ok(t.sum(sq))
            };
            let err = finite_diff_check(&params, loss, 1e-5).unwrap();
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn linear_map_gradient_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![random_array(&mut rng, 2, 5, 2.0)];
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |t: &mut Tape, vars: &Vec<Var>| -> Result<Var> {
            let cc = t.constant(Matrix::new(5, 1, c.clone())?);
            let out = t.matmul(vars[0], cc)?;
            Ok(t.sum(out))
        };
        assert!(finite_diff_check(&params, loss, 1e-5).unwrap() < 1e-8);
    }

    /// Every primitive, composed with a random linear read-out so each
    /// output entry carries a distinct adjoint.
    #[test]
    fn primitives_match_finite_differences() {
        type Build = fn(&mut Tape, Var, Var) -> Result<Var>;
        let cases: Vec<(&str, Build)> = vec![
            ("matmul", |t, a, b| {
                let bt = t.reshape(b, 3, 2)?;
                t.matmul(a, bt)
            }),
            ("add", |t, a, b| t.add(a, b)),
            ("sub", |t, a, b| t.sub(a, b)),
            ("mul", |t, a, b| t.mul(a, b)),
            ("add_row", |t, a, b| {
                let r = t.row(b, 1)?;
                t.add_row(a, r)
            }),
            ("scale", |t, a, _| Ok(t.scale(a, -1.7))),
            ("exp", |t, a, _| Ok(t.exp(a))),
            ("tanh", |t, a, _| Ok(t.tanh(a))),
            ("sigmoid", |t, a, _| Ok(t.sigmoid(a))),
            ("relu", |t, a, _| Ok(t.relu(a))),
            ("abs", |t, a, _| Ok(t.abs(a))),
            ("ln", |t, a, _| {
                let e = t.exp(a);
                Ok(t.ln(e))
            }),
            ("square", |t, a, _| Ok(t.square(a))),
            ("clamp", |t, a, _| Ok(t.clamp(a, -0.5, 0.5))),
            ("slice_cols", |t, a, _| t.slice_cols(a, 1, 2)),
            ("sum", |t, a, _| Ok(t.sum(a))),
        ];
        for (name, build) in cases {
            for trial in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
                let params = vec![random_array(&mut rng, 2, 3, 1.5), random_array(&mut rng, 2, 3, 1.5)];
                // keep clear of the relu/abs/clamp kinks where central
                // differences straddle a non-differentiable point
                let near_kink =
                    params.iter().flat_map(|p| &p.values).any(|v| v.abs() < 1e-3 || (v.abs() - 0.5).abs() < 1e-3);
                if near_kink {
                    continue;
                }
                let readout: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let loss = |t: &mut Tape, vars: &Vec<Var>| -> Result<Var> {
                    let out = build(t, vars[0], vars[1])?;
                    let (r, c) = t.shape(out);
                    let w = t.constant(Matrix::new(r, c, readout[..r * c].to_vec())?);
                    let prod = t.mul(out, w)?;
                    Ok(t.sum(prod))
                };
                let err = finite_diff_check(&params, loss, 1e-5).unwrap();
                assert!(err < 1e-4, "{name} trial {trial}: relative error {err}");
            }
        }
    }

    #[test]
    fn non_finite_loss_names_the_op() {
        let params = vec![ParamArray::new(vec![1], vec![-1.0], Role::Weight).unwrap()];
        let err = value_and_grad(&params, |t, v| Ok(t.ln(v[0]))).unwrap_err();
        assert!(err.to_string().contains("ln"), "{err}");
    }
}
