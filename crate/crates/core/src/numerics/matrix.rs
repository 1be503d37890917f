use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`. Vectors are represented as `1 × n` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values cannot fill a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out = a · b` for `a: m×k`, `b: k×n`, accumulating into `out` (`m×n`).
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += g · bᵀ` for `g: m×n`, `b: k×n`, `out: m×k`.
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let dot: f64 = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * k + p] += dot;
        }
    }
}

/// `out += aᵀ · g` for `a: m×k`, `g: m×n`, `out: k×n`.
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] · [5; 6] = [17; 39]
        let mut out = vec![0.0; 2];
        matmul_acc(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], &mut out, 2, 2, 1);
        assert_eq!(out, vec![17.0, 39.0]);
    }

    #[test]
    fn transposed_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let g = [1.0, -1.0]; // 2x1
        let mut at_g = vec![0.0; 3];
        matmul_at_acc(&a, &g, &mut at_g, 2, 3, 1);
        assert_eq!(at_g, vec![-3.0, -3.0, -3.0]);

        let b = [1.0, 0.0, 2.0]; // 3x1
        let mut g_bt = vec![0.0; 6];
        matmul_bt_acc(&[1.0, 2.0], &b, &mut g_bt, 2, 3, 1);
        assert_eq!(g_bt, vec![1.0, 0.0, 2.0, 2.0, 0.0, 4.0]);
    }

    #[test]
    fn rejects_bad_len() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
    }
}
