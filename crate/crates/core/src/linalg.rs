//! Small dense linear algebra: symmetric eigendecomposition (cyclic Jacobi),
//! PSD square roots and sample mean/covariance.
//!
//! Everything here runs sequentially in a fixed loop order, so identical input
//! bits give identical output bits.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kahan::KahanSum;

/// Default Jacobi convergence tolerance, relative to the Frobenius norm.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;
/// Default sweep limit for the Jacobi solver.
pub const MAX_JACOBI_SWEEPS: usize = 100;
/// Default clamp for slightly negative eigenvalues in [`sqrtm_psd`].
pub const DEFAULT_PSD_CLAMP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} exceeds {allowed:e})")]
    NotSymmetric { asymmetry: f64, allowed: f64 },
    #[error("Jacobi iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("eigenvalue {value:e} is below the allowed clamp -{clamp:e}")]
    NegativeEigenvalue { value: f64, clamp: f64 },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid matrix shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
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

/// Compensated dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y)
        .collect::<KahanSum>()
        .total()
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::InvalidShape(format!(
                "{rows}x{cols} has an empty axis"
            )));
        }
        if data.len() != rows * cols {
            return Err(LinalgError::InvalidShape(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix axes must be non-empty");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::InvalidShape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = KahanSum::new();
                for k in 0..self.cols {
                    acc.add(self[(i, k)] * other[(k, j)]);
                }
                out[(i, j)] = acc.total();
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect::<KahanSum>()
            .total()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v * v)
            .collect::<KahanSum>()
            .total()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest |a_ij - a_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Averages the matrix with its transpose, writing the upper triangle once
    /// and mirroring it so the result is bit-exactly symmetric.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Result of [`sym_eigen`]: eigenvalues in descending order, eigenvectors as
/// the matching columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Matrix,
}

impl SymEigen {
    /// V·diag(λ)·Vᵀ
    pub fn reconstruct(&self) -> Matrix {
        spectral_map(&self.vectors, &self.values.0)
    }
}

fn check_symmetric(a: &Matrix, tol: f64) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let allowed = tol * a.max_abs();
    let asymmetry = a.max_asymmetry();
    if asymmetry > allowed {
        return Err(LinalgError::NotSymmetric { asymmetry, allowed });
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `tol` doubles as the symmetry tolerance (relative to max |aᵢⱼ|) and the
/// convergence threshold on the off-diagonal Frobenius norm (relative to
/// ‖a‖_F). Only the upper triangle drives the rotations.
pub fn sym_eigen(a: &Matrix, tol: f64) -> Result<SymEigen, LinalgError> {
    sym_eigen_with_limit(a, tol, MAX_JACOBI_SWEEPS)
}

pub fn sym_eigen_with_limit(
    a: &Matrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<SymEigen, LinalgError> {
    check_symmetric(a, tol)?;
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let threshold = tol * a.frobenius_norm();

    let mut converged = false;
    for sweep in 0..=max_sweeps {
        if off_diagonal_norm(&m) <= threshold {
            converged = true;
            break;
        }
        if sweep == max_sweeps {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: max_sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their column order
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = Vector(order.iter().map(|&i| m[(i, i)]).collect());
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let mut acc = KahanSum::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            if i != j {
                acc.add(m[(i, j)] * m[(i, j)]);
            }
        }
    }
    acc.total().sqrt()
}

/// One Jacobi rotation annihilating m[p][q]; accumulates into v.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = m.rows;
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// V·diag(f)·Vᵀ, computed on the upper triangle and mirrored.
fn spectral_map(vectors: &Matrix, diag: &[f64]) -> Matrix {
    let n = vectors.rows;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = KahanSum::new();
            for (k, &d) in diag.iter().enumerate() {
                acc.add(vectors[(i, k)] * d * vectors[(j, k)]);
            }
            let val = acc.total();
            out[(i, j)] = val;
            out[(j, i)] = val;
        }
    }
    out
}

/// Symmetric square root of a positive semi-definite matrix.
///
/// Eigenvalues in `[-clamp·max(1, |λ|max), 0)` are treated as rounding noise
/// and set to zero; anything more negative is rejected.
pub fn sqrtm_psd(a: &Matrix, clamp: f64) -> Result<Matrix, LinalgError> {
    let eig = sym_eigen(a, DEFAULT_EIGEN_TOL)?;
    let scale = eig.values.0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let floor = clamp * scale;
    let mut roots = Vec::with_capacity(eig.values.dim());
    for &lambda in &eig.values.0 {
        if lambda < -floor {
            return Err(LinalgError::NegativeEigenvalue {
                value: lambda,
                clamp: floor,
            });
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    Ok(spectral_map(&eig.vectors, &roots))
}

/// Sum of square roots of the (clamped) eigenvalues of a PSD matrix, i.e.
/// tr √a without forming the root.
pub fn trace_sqrtm_psd(a: &Matrix, clamp: f64) -> Result<f64, LinalgError> {
    let eig = sym_eigen(a, DEFAULT_EIGEN_TOL)?;
    let scale = eig.values.0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let floor = clamp * scale;
    let mut acc = KahanSum::new();
    for &lambda in &eig.values.0 {
        if lambda < -floor {
            return Err(LinalgError::NegativeEigenvalue {
                value: lambda,
                clamp: floor,
            });
        }
        acc.add(lambda.max(0.0).sqrt());
    }
    Ok(acc.total())
}

/// Column means and unbiased (n−1) sample covariance of `rows`, one sample per row.
pub fn mean_and_cov(rows: &Matrix) -> Result<(Vector, Matrix), LinalgError> {
    let n = rows.rows;
    let d = rows.cols;
    if n < 2 {
        return Err(LinalgError::TooFewSamples(n));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| rows[(i, j)]).collect::<KahanSum>().total() / n as f64)
        .collect();

    let mut centered = rows.clone();
    for i in 0..n {
        for j in 0..d {
            centered[(i, j)] -= mean[j];
        }
    }

    let denom = (n - 1) as f64;
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = KahanSum::new();
            for i in 0..n {
                acc.add(centered[(i, a)] * centered[(i, b)]);
            }
            let v = acc.total() / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((Vector(mean), cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = StreamRng::new(seed, "linalg-test");
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.next_gaussian();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = StreamRng::new(seed, "linalg-test-rect");
        Matrix::new(r, c, (0..r * c).map(|_| rng.next_gaussian()).collect()).unwrap()
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eigen(&a, DEFAULT_EIGEN_TOL).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_eigenvectors_are_permuted_identity_columns() {
        let eig = sym_eigen(&Matrix::identity(5), DEFAULT_EIGEN_TOL).unwrap();
        assert!(eig.values.0.iter().all(|&v| v == 1.0));
        for j in 0..5 {
            let col = eig.vectors.column(j);
            let ones = col.0.iter().filter(|&&v| v.abs() == 1.0).count();
            let zeros = col.0.iter().filter(|&&v| v == 0.0).count();
            assert_eq!((ones, zeros), (1, 4));
        }
    }

    #[test]
    fn random_16_reconstructs_and_is_orthonormal() {
        let a = random_symmetric(16, 11);
        let eig = sym_eigen(&a, DEFAULT_EIGEN_TOL).unwrap();
        let rel = eig.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(rel < 1e-10, "relative error {rel}");
        let vtv = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(16)).frobenius_norm() <= 1e-10);
        assert!(eig.values.0.windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = eig.values.0.iter().sum();
        assert!((sum - a.trace()).abs() <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(
            sym_eigen(&rect, 1e-12),
            Err(LinalgError::NotSquare { .. })
        ));
        let asym = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_eigen(&asym, 1e-12),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn sweep_limit_reports_no_convergence() {
        let a = random_symmetric(12, 3);
        assert_eq!(
            sym_eigen_with_limit(&a, 1e-12, 1),
            Err(LinalgError::NoConvergence { sweeps: 1 })
        );
    }

    #[test]
    fn deterministic_bits() {
        let a = random_symmetric(20, 5);
        let e1 = sym_eigen(&a, DEFAULT_EIGEN_TOL).unwrap();
        let e2 = sym_eigen(&a, DEFAULT_EIGEN_TOL).unwrap();
        let bits = |e: &SymEigen| {
            e.values
                .0
                .iter()
                .chain(e.vectors.data())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&e1), bits(&e2));
        let handle = std::thread::spawn(move || sym_eigen(&a, DEFAULT_EIGEN_TOL).unwrap());
        assert_eq!(bits(&handle.join().unwrap()), bits(&e1));
    }

    #[test]
    fn sqrtm_diagonal_zero_identity() {
        let d = Matrix::from_diagonal(&[4.0, 9.0]);
        let s = sqrtm_psd(&d, DEFAULT_PSD_CLAMP).unwrap();
        assert_eq!(s, Matrix::from_diagonal(&[2.0, 3.0]));
        let z = sqrtm_psd(&Matrix::zeros(3, 3), DEFAULT_PSD_CLAMP).unwrap();
        assert_eq!(z, Matrix::zeros(3, 3));
        let i = sqrtm_psd(&Matrix::identity(7), DEFAULT_PSD_CLAMP).unwrap();
        assert!(i.sub(&Matrix::identity(7)).max_abs() <= 1e-12);
    }

    #[test]
    fn sqrtm_multiply_back() {
        let b = random_matrix(8, 8, 21);
        let a = b.transpose().matmul(&b).unwrap();
        let s = sqrtm_psd(&a, DEFAULT_PSD_CLAMP).unwrap();
        assert_eq!(s.max_asymmetry(), 0.0);
        let rel = s.matmul(&s).unwrap().sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn sqrtm_rejects_clearly_negative() {
        let a = Matrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(
            sqrtm_psd(&a, DEFAULT_PSD_CLAMP),
            Err(LinalgError::NegativeEigenvalue { .. })
        ));
        let tiny = Matrix::from_diagonal(&[1.0, -1e-13]);
        let s = sqrtm_psd(&tiny, DEFAULT_PSD_CLAMP).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn cov_two_point_and_degenerate() {
        let rows = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let (mean, cov) = mean_and_cov(&rows).unwrap();
        assert_eq!(mean.0, vec![1.0, 1.0]);
        assert_eq!(cov.data(), &[2.0, 2.0, 2.0, 2.0]);

        let same = Matrix::from_rows(&vec![vec![3.0, -1.0, 0.5]; 6]).unwrap();
        let (mean, cov) = mean_and_cov(&same).unwrap();
        assert_eq!(mean.0, vec![3.0, -1.0, 0.5]);
        assert!(cov.data().iter().all(|&v| v == 0.0));

        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(mean_and_cov(&one), Err(LinalgError::TooFewSamples(1)));
    }

    #[test]
    fn cov_matches_two_pass_reference() {
        let rows = random_matrix(100, 3, 99);
        let (mean, cov) = mean_and_cov(&rows).unwrap();
        // plain two-pass reference
        let n = 100;
        let mut m = [0.0; 3];
        for i in 0..n {
            for j in 0..3 {
                m[j] += rows[(i, j)];
            }
        }
        for v in &mut m {
            *v /= n as f64;
        }
        for a in 0..3 {
            assert!((mean[a] - m[a]).abs() <= 1e-12 * m[a].abs().max(1e-3));
            for b in 0..3 {
                let mut c = 0.0;
                for i in 0..n {
                    c += (rows[(i, a)] - m[a]) * (rows[(i, b)] - m[b]);
                }
                c /= (n - 1) as f64;
                assert!((cov[(a, b)] - c).abs() <= 1e-12 * c.abs().max(1e-3));
                assert_eq!(cov[(a, b)].to_bits(), cov[(b, a)].to_bits());
            }
        }
    }
}
