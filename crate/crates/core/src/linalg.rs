//! Small dense linear algebra for d×d covariance-type matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

#[allow(unused_imports)]
use num_traits::Float;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix. `values` ascend; column `k` of
/// `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds from row-major data; `None` if `data.len() != dim²`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == dim * dim).then_some(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Cyclic Jacobi rotations. Input is assumed symmetric.
    pub fn symmetric_eigen(&self) -> SymmetricEigen {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut v = Self::identity(n);
        let total: f64 = a.iter().map(|x| x * x).sum();
        for _ in 0..64 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            if off <= f64::EPSILON * f64::EPSILON * total || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v.data[k * n + p];
                        let vkq = v.data[k * n + q];
                        v.data[k * n + p] = c * vkp - s * vkq;
                        v.data[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
        let values = order.iter().map(|&i| a[i * n + i]).collect();
        let mut vectors = Self::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                vectors.data[k * n + col] = v.data[k * n + src];
            }
        }
        SymmetricEigen { values, vectors }
    }

    /// Largest eigenvalue and its unit eigenvector.
    pub fn leading_eigen(&self) -> (f64, Vec<f64>) {
        if self.dim == 1 {
            return (self.data[0], vec![1.0]);
        }
        let eig = self.symmetric_eigen();
        let last = self.dim - 1;
        let vec = (0..self.dim).map(|k| eig.vectors[(k, last)]).collect();
        (eig.values[last], vec)
    }

    /// Symmetric square root with negative eigenvalues clipped to zero.
    pub fn sqrt_psd(&self) -> Self {
        if self.dim == 1 {
            return Self::diagonal(&[self.data[0].max(0.0).sqrt()]);
        }
        let eig = self.symmetric_eigen();
        let n = self.dim;
        let mut out = Self::zeros(n);
        for (k, &lambda) in eig.values.iter().enumerate() {
            let root = lambda.max(0.0).sqrt();
            if root == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = eig.vectors[(i, k)] * root;
                for j in 0..n {
                    out.data[i * n + j] += vi * eig.vectors[(j, k)];
                }
            }
        }
        out
    }

    /// Lower Cholesky factor, `None` unless positive definite.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.dim;
        let mut l = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Some(l)
    }

    /// Solves `self · X = rhs` by LU with partial pivoting. `None` when a
    /// pivot falls below `pivot_tol` times the largest entry of `self`.
    pub fn solve_matrix(&self, rhs: &Self, pivot_tol: f64) -> Option<Self> {
        let n = self.dim;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap_or(col);
            if a[pivot_row * n + col].abs() <= pivot_tol * scale {
                return None;
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                    b.swap(col * n + k, pivot_row * n + k);
                }
            }
            let p = a[col * n + col];
            for row in (col + 1)..n {
                let f = a[row * n + col] / p;
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                for k in 0..n {
                    b[row * n + k] -= f * b[col * n + k];
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[col * n + col];
            for k in 0..n {
                let mut s = b[col * n + k];
                for j in (col + 1)..n {
                    s -= a[col * n + j] * b[j * n + k];
                }
                b[col * n + k] = s / p;
            }
        }
        Some(Self { dim: n, data: b })
    }

    pub fn solve_vec(&self, rhs: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
        let n = self.dim;
        // Pad the right-hand side into a matrix whose first column is `rhs`.
        let mut m = Self::zeros(n);
        for (i, v) in rhs.iter().enumerate() {
            m[(i, 0)] = *v;
        }
        let x = self.solve_matrix(&m, pivot_tol)?;
        Some((0..n).map(|i| x[(i, 0)]).collect())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix::from_row_major(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]).unwrap()
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = sample();
        let eig = a.symmetric_eigen();
        let mut rebuilt = Matrix::zeros(3);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    rebuilt[(i, j)] += eig.values[k] * eig.vectors[(i, k)] * eig.vectors[(j, k)];
                }
            }
        }
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let a = sample();
        let r = a.sqrt_psd();
        assert!(r.matmul(&r).max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn sqrt_clips_negative_roundoff() {
        let a = Matrix::diagonal(&[1.0, -1e-14]);
        let r = a.sqrt_psd();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn cholesky_and_solve() {
        let a = sample();
        let l = a.cholesky().unwrap();
        let mut lt = Matrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                lt[(i, j)] = l[(j, i)];
            }
        }
        assert!(l.matmul(&lt).max_abs_diff(&a) < 1e-12);

        let x = a.solve_vec(&[1.0, 2.0, 3.0], 1e-14).unwrap();
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_solve_is_rejected() {
        let a = Matrix::from_row_major(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(a.solve_vec(&[1.0, 1.0], 1e-12).is_none());
    }
}
