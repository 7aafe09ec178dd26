//! Dense row-major vectors and matrices in `f64`, plus the two squashing
//! nonlinearities used by every cell.

use std::ops::{Index, IndexMut};

use crate::error::{check_dim, Result};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Vector(vec![value; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn hadamard(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Vector {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Vector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector(data.to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &Vector) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("Matrix::from_vec", rows * cols, data.len())?;
        Ok(Matrix { data, rows, cols })
    }

    /// Panics on ragged input; intended for literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged matrix literal");
            data.extend_from_slice(r);
        }
        Matrix {
            data,
            rows: rows.len(),
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        check_dim("matvec", self.cols, v.len())?;
        let mut out = Vector::zeros(self.rows);
        self.matvec_acc(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `out += self · v`, shapes assumed checked.
    pub(crate) fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · v`, shapes assumed checked.
    pub(crate) fn matvec_t_acc(&self, v: &[f64], out: &mut [f64]) {
        for (row, &vi) in self.data.chunks_exact(self.cols.max(1)).zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }

    pub fn matvec_t(&self, v: &Vector) -> Result<Vector> {
        check_dim("matvec_t", self.rows, v.len())?;
        let mut out = Vector::zeros(self.cols);
        self.matvec_t_acc(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `self += a · bᵀ`
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (row, &ai) in self.data.chunks_exact_mut(self.cols.max(1)).zip(a) {
            if ai == 0.0 {
                continue;
            }
            for (r, bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `diag(d) · self`
    pub fn scale_rows(&self, d: &Vector) -> Matrix {
        debug_assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for (row, &di) in out.data.chunks_exact_mut(self.cols.max(1)).zip(d.iter()) {
            for r in row {
                *r *= di;
            }
        }
        out
    }

    /// `self · diag(d)`
    pub fn scale_cols(&self, d: &Vector) -> Matrix {
        debug_assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (r, &dj) in row.iter_mut().zip(d.iter()) {
                *r *= dj;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `U·h + W·x + b`
pub fn affine(u: &Matrix, h: &Vector, w: &Matrix, x: &Vector, b: &Vector) -> Result<Vector> {
    let n = b.len();
    check_dim("affine: U rows", n, u.rows())?;
    check_dim("affine: U cols", u.cols(), h.len())?;
    check_dim("affine: W rows", n, w.rows())?;
    check_dim("affine: W cols", w.cols(), x.len())?;
    let mut out = b.clone();
    u.matvec_acc(h.as_slice(), out.as_mut_slice());
    w.matvec_acc(x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh_vec(v: &Vector) -> Vector {
    v.map(f64::tanh)
}

pub fn sigmoid_vec(v: &Vector) -> Vector {
    v.map(sigmoid)
}

/// `1 − tanh(v)²`, evaluated at the pre-activation.
pub fn tanh_deriv(v: &Vector) -> Vector {
    v.map(|x| {
        let t = x.tanh();
        1.0 - t * t
    })
}

/// `σ(v)(1 − σ(v))`, evaluated at the pre-activation.
pub fn sigmoid_deriv(v: &Vector) -> Vector {
    v.map(|x| {
        let s = sigmoid(x);
        s * (1.0 - s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from(xs)
    }

    #[test]
    fn affine_zero_case() {
        let out = affine(
            &Matrix::zeros(2, 2),
            &v(&[3.0, -1.0]),
            &Matrix::zeros(2, 1),
            &v(&[7.0]),
            &Vector::zeros(2),
        )
        .unwrap();
        assert_eq!(out, Vector::zeros(2));
    }

    #[test]
    fn affine_identity_case() {
        let out = affine(
            &Matrix::identity(2),
            &v(&[1.0, 2.0]),
            &Matrix::zeros(2, 1),
            &v(&[5.0]),
            &v(&[1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(out, v(&[2.0, 3.0]));
    }

    #[test]
    fn affine_hand_multiply() {
        let u = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let w = Matrix::from_rows(&[&[2.0], &[0.0]]);
        let out = affine(&u, &v(&[1.0, 1.0]), &w, &v(&[3.0]), &Vector::zeros(2)).unwrap();
        assert_eq!(out, v(&[8.0, 1.0]));
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let err = affine(
            &Matrix::zeros(2, 3),
            &v(&[1.0, 2.0]),
            &Matrix::zeros(2, 1),
            &v(&[1.0]),
            &Vector::zeros(2),
        );
        assert!(matches!(err, Err(crate::Error::Dimension { .. })));
    }

    #[test]
    fn nonlinearities_at_zero() {
        let z = Vector::zeros(3);
        assert_eq!(tanh_vec(&z), z);
        assert_eq!(tanh_deriv(&z), Vector::filled(3, 1.0));
        assert_eq!(sigmoid_vec(&z), Vector::filled(3, 0.5));
    }

    #[test]
    fn tanh_deriv_matches_central_difference() {
        let x = v(&[0.3, -1.2]);
        let step = 1e-5;
        let d = tanh_deriv(&x);
        for i in 0..2 {
            let fd = ((x[i] + step).tanh() - (x[i] - step).tanh()) / (2.0 * step);
            assert!((fd - d[i]).abs() < 1e-8, "{fd} vs {}", d[i]);
        }
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((sigmoid(10.0) - 0.999_954_602_131_297_6).abs() < 1e-15);
    }

    #[test]
    fn transpose_products() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let g = v(&[1.0, -1.0]);
        assert_eq!(m.matvec_t(&g).unwrap(), m.transpose().matvec(&g).unwrap());
        let mut acc = Matrix::zeros(2, 3);
        acc.add_outer(&[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(acc.as_slice(), &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
    }

    fn rel_close(a: &Vector, b: &Vector, tol: f64) -> bool {
        let scale = a.max_abs().max(b.max_abs()).max(1.0);
        a.sub(b).max_abs() <= tol * scale
    }

    proptest! {
        #[test]
        fn affine_is_linear_in_each_argument(
            seed in proptest::collection::vec(-2.0f64..2.0, 3 * 3 + 3 * 2 + 3 + 2 + 3 + 2 + 3),
            s in -3.0f64..3.0,
        ) {
            let (n, d) = (3, 2);
            let mut it = seed.into_iter();
            let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
            let u = Matrix::from_vec(n, n, take(n * n)).unwrap();
            let w = Matrix::from_vec(n, d, take(n * d)).unwrap();
            let h1 = Vector::from(take(n));
            let x1 = Vector::from(take(d));
            let h2 = Vector::from(take(n));
            let x2 = Vector::from(take(d));
            let b = Vector::from(take(n));
            let zb = Vector::zeros(n);

            // additivity and homogeneity in (h, x) with the bias held at zero
            let lhs = affine(&u, &h1.add(&h2), &w, &x1.add(&x2), &zb).unwrap();
            let rhs = affine(&u, &h1, &w, &x1, &zb).unwrap()
                .add(&affine(&u, &h2, &w, &x2, &zb).unwrap());
            prop_assert!(rel_close(&lhs, &rhs, 1e-12));
            let lhs = affine(&u, &h1.scale(s), &w, &x1.scale(s), &zb).unwrap();
            let rhs = affine(&u, &h1, &w, &x1, &zb).unwrap().scale(s);
            prop_assert!(rel_close(&lhs, &rhs, 1e-12));

            // linear in the bias
            let lhs = affine(&u, &h1, &w, &x1, &b).unwrap();
            let rhs = affine(&u, &h1, &w, &x1, &zb).unwrap().add(&b);
            prop_assert!(rel_close(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn derivative_maps_match_finite_differences(x in -5.0f64..5.0) {
            let step = 1e-5;
            let xv = Vector::from(vec![x]);
            let fd_t = ((x + step).tanh() - (x - step).tanh()) / (2.0 * step);
            let fd_s = (sigmoid(x + step) - sigmoid(x - step)) / (2.0 * step);
            let dt = tanh_deriv(&xv)[0];
            let ds = sigmoid_deriv(&xv)[0];
            prop_assert!((fd_t - dt).abs() <= 1e-6 * dt.abs().max(1e-3));
            prop_assert!((fd_s - ds).abs() <= 1e-6 * ds.abs().max(1e-3));
        }
    }
}
