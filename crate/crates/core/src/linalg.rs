//! Small dense matrices over [`Real`] scalars, plus the few `f64`-only
//! factorizations (QR, SVD, matrix exponential) delegated to nalgebra.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::jets::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Build from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn lift(m: &Mat<f64>) -> Self {
        Mat {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| T::cst(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, o: &Mat<T>) -> Self {
        assert_eq!(self.cols, o.rows, "matmul shape mismatch");
        let mut r = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    r.data[i * o.cols + j] += a * o[(k, j)];
                }
            }
        }
        r
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mat_vec shape mismatch");
        (0..self.rows)
            .map(|i| {
                let mut acc = T::zero();
                for (j, &vj) in v.iter().enumerate() {
                    acc += self[(i, j)] * vj;
                }
                acc
            })
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, o: &Mat<T>) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Mat<T>) -> Self {
        self.zip(o, |a, b| a - b)
    }

    fn zip(&self, o: &Mat<T>, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Value part of every entry.
    pub fn values(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.value()).collect(),
        }
    }
}

impl Mat<f64> {
    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_na(m: &DMatrix<f64>) -> Self {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn det(&self) -> f64 {
        self.to_na().determinant()
    }

    /// `‖aᵀa − I‖_∞` (entrywise max).
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.cols;
        self.transpose()
            .matmul(self)
            .sub(&Mat::identity(n))
            .max_abs()
    }
}

/// Lower Cholesky factor `L` with `g = L Lᵀ`.
pub fn cholesky<T: Real>(g: &Mat<T>) -> Mat<T> {
    let n = g.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        let inv = ljj.recip();
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s * inv;
        }
    }
    l
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse<T: Real>(l: &Mat<T>) -> Mat<T> {
    let n = l.rows();
    let mut inv = Mat::zeros(n, n);
    let diag: Vec<T> = (0..n).map(|i| l[(i, i)].recip()).collect();
    for j in 0..n {
        inv[(j, j)] = diag[j];
        for i in (j + 1)..n {
            let mut s = T::zero();
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s * diag[i];
        }
    }
    inv
}

/// Nearest rotation (polar factor) of a square matrix, determinant forced to +1.
pub fn polar_rotation(a: &Mat<f64>) -> Mat<f64> {
    let svd = a.to_na().svd(true, true);
    let (mut u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        for i in 0..u.nrows() {
            u[(i, k)] = -u[(i, k)];
        }
        r = &u * &v_t;
    }
    Mat::from_na(&r)
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_na(&a.to_na().exp())
}
