use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Whether an array takes part in decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weight,
    Bias,
}

/// A learnable array. Shapes are one- or two-dimensional; a 1-D array of
/// length `n` is treated as a `1 × n` row when placed on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub role: Role,
}

impl ParamArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>, role: Role) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() || shape.is_empty() || shape.len() > 2 {
            return Err(Error::Shape(format!("{} values for shape {shape:?}", values.len())));
        }
        Ok(Self { shape, values, role })
    }

    pub fn zeros(shape: Vec<usize>, role: Role) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n], role }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows_cols(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let (rows, cols) = self.rows_cols();
        Matrix { rows, cols, data: self.values.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One gradient array per parameter array, in [`ParamTree::arrays`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap(pub Vec<Vec<f64>>);

impl GradientMap {
    pub fn zeros_like<P: ParamTree + ?Sized>(params: &P) -> Self {
        GradientMap(params.arrays().iter().map(|a| vec![0.0; a.len()]).collect())
    }

    /// `self += other`, element by element.
    pub fn accumulate(&mut self, other: &GradientMap) {
        for (dst, src) in self.0.iter_mut().zip(&other.0) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// An ordered collection of learnable arrays.
pub trait ParamTree {
    fn arrays(&self) -> Vec<&ParamArray>;
    fn arrays_mut(&mut self) -> Vec<&mut ParamArray>;

    fn num_values(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }
}

/// A parameter tree that can be placed on a tape as differentiable leaves.
pub trait Bind: ParamTree {
    type Vars;

    fn bind(&self, tape: &mut Tape) -> Self::Vars;

    /// Leaf vars in the same order as [`ParamTree::arrays`].
    fn leaves(vars: &Self::Vars) -> Vec<Var>;
}

impl ParamTree for Vec<ParamArray> {
    fn arrays(&self) -> Vec<&ParamArray> {
        self.iter().collect()
    }

    fn arrays_mut(&mut self) -> Vec<&mut ParamArray> {
        self.iter_mut().collect()
    }
}

impl Bind for Vec<ParamArray> {
    type Vars = Vec<Var>;

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.iter().map(|a| tape.param(a.to_matrix())).collect()
    }

    fn leaves(vars: &Vec<Var>) -> Vec<Var> {
        vars.clone()
    }
}

impl<A: ParamTree, B: ParamTree> ParamTree for (A, B) {
    fn arrays(&self) -> Vec<&ParamArray> {
        let mut v = self.0.arrays();
        v.extend(self.1.arrays());
        v
    }

    fn arrays_mut(&mut self) -> Vec<&mut ParamArray> {
        let mut v = self.0.arrays_mut();
        v.extend(self.1.arrays_mut());
        v
    }
}

impl<A: Bind, B: Bind> Bind for (A, B) {
    type Vars = (A::Vars, B::Vars);

    fn bind(&self, tape: &mut Tape) -> Self::Vars {
        (self.0.bind(tape), self.1.bind(tape))
    }

    fn leaves(vars: &Self::Vars) -> Vec<Var> {
        let mut v = A::leaves(&vars.0);
        v.extend(B::leaves(&vars.1));
        v
    }
}

/// Evaluates `loss` with every array of `params` as a differentiable leaf and
/// returns its value with the exact gradient of each array.
pub fn value_and_grad<P, F>(params: &P, loss: F) -> Result<(f64, GradientMap)>
where
    P: Bind,
    F: FnOnce(&mut Tape, &P::Vars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let root = loss(&mut tape, &vars)?;
    tape.check_finite()?;
    let value = tape.scalar(root);
    let mut grads = tape.backward(root);
    let map = GradientMap(P::leaves(&vars).into_iter().map(|v| grads.take(v)).collect());
    if !map.is_finite() {
        return Err(Error::NonFinite { op: "backward" });
    }
    Ok((value, map))
}

/// Loss value only.
pub fn value<P, F>(params: &P, loss: F) -> Result<f64>
where
    P: Bind,
    F: FnOnce(&mut Tape, &P::Vars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let root = loss(&mut tape, &vars)?;
    tape.check_finite()?;
    Ok(tape.scalar(root))
}

/// Compares analytic gradients with central differences of step `step` and
/// returns the largest relative error
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)` over every
/// parameter entry.
pub fn finite_diff_check<P, F>(params: &P, loss: F, step: f64) -> Result<f64>
where
    P: Bind + Clone,
    F: Fn(&mut Tape, &P::Vars) -> Result<Var>,
{
    let (_, analytic) = value_and_grad(params, &loss)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let n_arrays = params.arrays().len();
    for a in 0..n_arrays {
        let len = params.arrays()[a].len();
        for k in 0..len {
            let orig = params.arrays()[a].values[k];
            probe.arrays_mut()[a].values[k] = orig + step;
            let up = value(&probe, &loss)?;
            probe.arrays_mut()[a].values[k] = orig - step;
            let down = value(&probe, &loss)?;
            probe.arrays_mut()[a].values[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let an = analytic.0[a][k];
            let rel = (an - numeric).abs() / an.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
