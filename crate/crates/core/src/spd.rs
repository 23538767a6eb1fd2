//! Small dense symmetric-matrix algebra.
//!
//! Everything here targets matrices of dimension at most 6: effective
//! conductivity tensors (2×2, 3×3) and, generically, Mandel-form stiffness
//! tensors (6×6). Eigendecompositions use cyclic Jacobi rotations with a
//! fixed sweep order so that results are reproducible bit for bit.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self {
            rows: n,
            cols: m,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x * n + c].abs().total_cmp(&a[y * n + c].abs()))
                .unwrap();
            if a[p * n + c] == 0.0 {
                return 0.0;
            }
            if p != c {
                for j in 0..n {
                    a.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let pivot = a[c * n + c];
            det *= pivot;
            for r in (c + 1)..n {
                let f = a[r * n + c] / pivot;
                for j in c..n {
                    a[r * n + j] -= f * a[c * n + j];
                }
            }
        }
        det
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

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{}[", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:.6e}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

/// Symmetric matrix stored as its upper triangle, row-major.
///
/// For `m = 2` the packed order is `(a11, a12, a22)`; for `m = 3` it is
/// `(a11, a12, a13, a22, a23, a33)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * m - i * (i + 1) / 2 + j
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            a.set(i, i, s);
        }
        a
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut a = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            a.set(i, i, d);
        }
        a
    }

    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != dim * (dim + 1) / 2 {
            return Err(Error::invalid(format!(
                "packed symmetric matrix of dim {dim} needs {} entries, got {}",
                dim * (dim + 1) / 2,
                packed.len()
            )));
        }
        Ok(Self { dim, packed })
    }

    /// Symmetric part `½(A + Aᵀ)` of a square dense matrix.
    pub fn from_dense(a: &Matrix) -> Self {
        assert_eq!(a.rows(), a.cols(), "symmetric part of a non-square matrix");
        let m = a.rows();
        let mut s = Self::zeros(m);
        for i in 0..m {
            for j in i..m {
                s.set(i, j, 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
        s
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.dim, i, j);
        self.packed[k] = v;
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * s).collect(),
        }
    }

    /// `B·A·Bᵀ` for a (possibly rectangular) `B`.
    pub fn congruence(&self, b: &Matrix) -> SymMat {
        assert_eq!(b.cols(), self.dim, "congruence dimension mismatch");
        let ab = b.matmul(&self.to_dense());
        SymMat::from_dense(&ab.matmul(&b.transpose()))
    }

    /// Applies a scalar function to the spectrum: `V f(Λ) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<SymMat> {
        let eig = eig_sym(self)?;
        let mapped: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
        Ok(eig.reconstruct_with(&mapped))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values.last().copied().unwrap_or(0.0))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(eig_sym(self)?.values.first().copied().unwrap_or(0.0))
    }

    fn check_same_dim(&self, other: &SymMat) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }
}

impl Add for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        SymMat {
            dim: self.dim,
            packed: self.packed.iter().zip(&rhs.packed).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        SymMat {
            dim: self.dim,
            packed: self.packed.iter().zip(&rhs.packed).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &SymMat {
    type Output = SymMat;
    fn mul(self, s: f64) -> SymMat {
        self.scale(s)
    }
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMat{}{:?}", self.dim, self.packed)
    }
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> SymMat {
        self.reconstruct_with(&self.values)
    }

    /// `V diag(values) Vᵀ` with replacement eigenvalues.
    pub fn reconstruct_with(&self, values: &[f64]) -> SymMat {
        let m = self.dim();
        assert_eq!(values.len(), m);
        let v = &self.vectors;
        SymMat::from_fn(m, |i, j| (0..m).map(|k| v[(i, k)] * values[k] * v[(j, k)]).sum())
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Pairs `(p, q)` are visited in row order on every sweep; iteration stops
/// once the off-diagonal mass falls below `1e-30` of the total mass (or is
/// exactly zero). The sort is stable, so ties keep their sweep order.
pub fn eig_sym(a: &SymMat) -> Result<EigenPair> {
    if !a.is_finite() {
        return Err(Error::invalid("eigendecomposition of a non-finite matrix"));
    }
    let m = a.dim();
    let mut w = a.to_dense();
    let mut v = Matrix::identity(m);

    let total: f64 = w.as_slice().iter().map(|x| x * x).sum();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off == 0.0 || off <= 1e-30 * total {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..m {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..m {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let vectors = Matrix::from_fn(m, m, |i, j| v[(i, order[j])]);
    Ok(EigenPair { values, vectors })
}

/// `a ⪯ b` in the Löwner order, with a relative eigenvalue tolerance.
pub fn loewner_leq(a: &SymMat, b: &SymMat, tol: f64) -> Result<bool> {
    Ok(loewner_margin(a, b)? >= -tol * (b - a).frob_norm().max(1.0))
}

/// Smallest eigenvalue of `b − a`; nonnegative iff `a ⪯ b`.
pub fn loewner_margin(a: &SymMat, b: &SymMat) -> Result<f64> {
    a.check_same_dim(b)?;
    (b - a).min_eigenvalue()
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
///
/// Eigenvalues at or below `eps_rel·λ_max` are treated as zero.
pub fn pinv_sym(a: &SymMat, eps_rel: f64) -> Result<SymMat> {
    let eig = eig_sym(a)?;
    let lmax = eig.values.iter().fold(0.0_f64, |acc, &l| acc.max(l.abs()));
    let cutoff = eps_rel * lmax;
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 })
        .collect();
    Ok(eig.reconstruct_with(&inv))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: &SymMat) -> Result<SymMat> {
    let eig = eig_sym(a)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    if lmin <= 0.0 || lmin <= 1e-14 * lmax {
        return Err(Error::invalid(format!(
            "matrix is not positive definite (min eigenvalue {lmin:.3e})"
        )));
    }
    Ok(eig.reconstruct_with(&eig.values.iter().map(|l| 1.0 / l).collect::<Vec<_>>()))
}

impl SymMat {
    /// Frobenius norm over the full matrix; off-diagonal entries count twice.
    pub fn frob_norm(&self) -> f64 {
        let m = self.dim;
        let mut s = 0.0;
        for i in 0..m {
            for j in i..m {
                let v = self.get(i, j);
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }
}

pub fn frob_norm(a: &SymMat) -> f64 {
    a.frob_norm()
}

pub fn frob_dist(a: &SymMat, b: &SymMat) -> Result<f64> {
    a.check_same_dim(b)?;
    Ok((a - b).frob_norm())
}

/// Matrix geometric mean `A # B = A^½ (A^-½ B A^-½)^½ A^½` of two SPD matrices.
///
/// Monotone in both arguments with respect to the Löwner order, so the mean
/// of two tensors lying between common bounds lies between them as well.
pub fn geometric_mean(a: &SymMat, b: &SymMat) -> Result<SymMat> {
    a.check_same_dim(b)?;
    let eig = eig_sym(a)?;
    if eig.values.last().is_some_and(|&l| l <= 0.0) {
        return Err(Error::invalid("geometric mean of a non-positive-definite matrix"));
    }
    let sqrt_a = eig.reconstruct_with(&eig.values.iter().map(|l| l.sqrt()).collect::<Vec<_>>());
    let isqrt_a =
        eig.reconstruct_with(&eig.values.iter().map(|l| 1.0 / l.sqrt()).collect::<Vec<_>>());
    let inner = b.congruence(&isqrt_a.to_dense());
    let inner_sqrt = inner.map_spectrum(|l| l.max(0.0).sqrt())?;
    Ok(inner_sqrt.congruence(&sqrt_a.to_dense()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, m: usize) -> SymMat {
        SymMat::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Rotation assembled from Givens factors with random angles.
    fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
        let mut q = Matrix::identity(m);
        for p in 0..m {
            for r in (p + 1)..m {
                let t: f64 = rng.random_range(-3.0..3.0);
                let mut g = Matrix::identity(m);
                g[(p, p)] = t.cos();
                g[(r, r)] = t.cos();
                g[(p, r)] = -t.sin();
                g[(r, p)] = t.sin();
                q = q.matmul(&g);
            }
        }
        q
    }

    #[test]
    fn packed_layout_is_upper_row_major() {
        let a = SymMat::from_fn(3, |i, j| (10 * i + j) as f64);
        assert_eq!(a.packed(), &[0.0, 1.0, 2.0, 11.0, 12.0, 22.0]);
        assert_eq!(a.get(2, 1), 12.0);
        let b = SymMat::from_fn(6, |i, j| (10 * i + j) as f64);
        for i in 0..6 {
            for j in 0..6 {
                let (lo, hi) = (i.min(j), i.max(j));
                assert_eq!(b.get(i, j), (10 * lo + hi) as f64);
            }
        }
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_sym(&SymMat::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        assert!((&vtv - &Matrix::identity(2)).frob_norm() < 1e-14);

        let e = eig_sym(&SymMat::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_recovers_constructed_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_orthogonal(&mut rng, 3);
        let spectrum = [4.5, 1.25, -0.75];
        let a = SymMat::from_dense(
            &q.matmul(&Matrix::from_fn(3, 3, |i, j| if i == j { spectrum[i] } else { 0.0 }))
                .matmul(&q.transpose()),
        );
        let e = eig_sym(&a).unwrap();
        for (got, want) in e.values.iter().zip(spectrum) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn eig_rejects_non_finite() {
        let mut a = SymMat::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(eig_sym(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eig_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_sym(&mut rng, 6);
        let e1 = eig_sym(&a).unwrap();
        let e2 = eig_sym(&a).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn loewner_examples() {
        let i2 = SymMat::identity(2);
        let two = SymMat::scaled_identity(2, 2.0);
        assert!(loewner_leq(&i2, &two, 0.0).unwrap());
        assert!(!loewner_leq(&two, &i2, 0.0).unwrap());
        assert!(loewner_leq(&i2, &SymMat::identity(3), 0.0).is_err());
    }

    #[test]
    fn pinv_examples() {
        let p = pinv_sym(&SymMat::from_diag(&[4.0, 0.0]), 1e-12).unwrap();
        assert!((p.get(0, 0) - 0.25).abs() < 1e-15);
        assert!(p.get(1, 1).abs() < 1e-15);
        assert!(p.get(0, 1).abs() < 1e-15);

        assert_eq!(pinv_sym(&SymMat::zeros(3), 1e-12).unwrap(), SymMat::zeros(3));

        let spd = SymMat::from_packed(2, vec![2.0, 0.5, 1.0]).unwrap();
        let p = pinv_sym(&spd, 1e-12).unwrap();
        let det = 2.0 * 1.0 - 0.25;
        let inv = SymMat::from_packed(2, vec![1.0 / det, -0.5 / det, 2.0 / det]).unwrap();
        assert!(frob_dist(&p, &inv).unwrap() < 1e-12);
    }

    #[test]
    fn pinv_rank_one_closed_form() {
        let a = [0.3, -1.2, 0.7];
        let aat = SymMat::from_fn(3, |i, j| a[i] * a[j]);
        let n2: f64 = a.iter().map(|x| x * x).sum();
        let want = aat.scale(1.0 / (n2 * n2));
        let got = pinv_sym(&aat, 1e-12).unwrap();
        assert!(frob_dist(&got, &want).unwrap() < 1e-12 * want.frob_norm());
        // A A⁺ A = A
        let d = aat.to_dense();
        let back = d.matmul(&got.to_dense()).matmul(&d);
        assert!((&back - &d).frob_norm() < 1e-10 * d.frob_norm());
    }

    #[test]
    fn frobenius_counts_off_diagonals_twice() {
        assert!((frob_norm(&SymMat::identity(2)) - 2f64.sqrt()).abs() < 1e-15);
        let off = SymMat::from_packed(2, vec![0.0, 1.0, 0.0]).unwrap();
        assert!((frob_norm(&off) - 2f64.sqrt()).abs() < 1e-15);
        let a = SymMat::from_packed(2, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(frob_dist(&a, &a).unwrap(), 0.0);
        assert!((a.frob_norm() - a.to_dense().frob_norm()).abs() < 1e-15);
        assert!(frob_dist(&a, &SymMat::identity(3)).is_err());
    }

    #[test]
    fn geometric_mean_of_scalars_and_commuting() {
        let a = SymMat::from_diag(&[1.0, 4.0]);
        let b = SymMat::from_diag(&[100.0, 9.0]);
        let g = geometric_mean(&a, &b).unwrap();
        assert!((g.get(0, 0) - 10.0).abs() < 1e-12);
        assert!((g.get(1, 1) - 6.0).abs() < 1e-12);
        assert!(g.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_sym(&mut rng, 3);
            let y = random_sym(&mut rng, 3);
            let a = &SymMat::identity(x.dim()).congruence(&x.to_dense()) + &SymMat::scaled_identity(3, 0.1);
            let b = &SymMat::identity(y.dim()).congruence(&y.to_dense()) + &SymMat::scaled_identity(3, 0.5);
            let ab = geometric_mean(&a, &b).unwrap();
            let ba = geometric_mean(&b, &a).unwrap();
            assert!(frob_dist(&ab, &ba).unwrap() < 1e-10 * ab.frob_norm());
            // (A#B) A⁻¹ (A#B) = B
            let ainv = inv_spd(&a).unwrap();
            let back = ainv.congruence(&ab.to_dense());
            assert!(frob_dist(&back, &b).unwrap() < 1e-9 * b.frob_norm());
        }
    }

    #[test]
    fn determinant_of_rotation_and_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(&mut rng, 4);
        assert!((q.det() - 1.0).abs() < 1e-12);
        let mut r = q.clone();
        for i in 0..4 {
            r[(i, 0)] = -r[(i, 0)];
        }
        assert!((r.det() + 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sym_strategy() -> impl Strategy<Value = SymMat> {
            prop_oneof![Just(2usize), Just(3usize), Just(6usize)].prop_flat_map(|m| {
                proptest::collection::vec(-10.0f64..10.0, m * (m + 1) / 2)
                    .prop_map(move |p| SymMat::from_packed(m, p).unwrap())
            })
        }

        proptest! {
            #[test]
            fn eigenpair_invariants(a in sym_strategy()) {
                let e = eig_sym(&a).unwrap();
                let m = a.dim();
                let vtv = e.vectors.transpose().matmul(&e.vectors);
                prop_assert!((&vtv - &Matrix::identity(m)).frob_norm() <= 1e-10);
                let rec = e.reconstruct();
                prop_assert!(frob_dist(&rec, &a).unwrap() <= 1e-10 * a.frob_norm().max(1.0));
                prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            }

            #[test]
            fn loewner_reflexive_and_antisymmetric(a in sym_strategy(), b in sym_strategy()) {
                prop_assert!(loewner_leq(&a, &a, 1e-12).unwrap());
                if a.dim() == b.dim() && loewner_leq(&a, &b, 1e-12).unwrap() && loewner_leq(&b, &a, 1e-12).unwrap() {
                    prop_assert!(frob_dist(&a, &b).unwrap() <= 1e-6 * a.frob_norm().max(1.0));
                }
            }

            #[test]
            fn pinv_involution_on_spd(a in sym_strategy()) {
                let m = a.dim();
                let spd = &SymMat::identity(a.dim()).congruence(&a.to_dense()) + &SymMat::scaled_identity(m, 1.0);
                let back = pinv_sym(&pinv_sym(&spd, 1e-12).unwrap(), 1e-12).unwrap();
                prop_assert!(frob_dist(&back, &spd).unwrap() <= 1e-10 * spd.frob_norm());
            }
        }
    }
}
