//! Dense symmetric matrices of dimension at most 4.
//!
//! Only the upper triangle is stored. Eigenvalues come from cyclic Jacobi
//! rotations, which for these sizes converge to rounding level in a handful
//! of sweeps and need no external linear-algebra backend.

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric matrix, upper triangle stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: [f64; MAX_DIM * (MAX_DIM + 1) / 2],
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i hold dim + (dim-1) + ... + (dim-i+1) entries
    i * dim - i * (i.saturating_sub(1)) / 2 + (j - i)
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::invalid(format!("matrix dimension {dim} outside 1..=4")))
    }
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(SymMatrix {
            dim,
            upper: [0.0; 10],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m.validate()?;
        Ok(m)
    }

    /// Builds from the packed upper triangle (`dim*(dim+1)/2` values, row-major).
    pub fn from_upper(dim: usize, upper: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        let len = dim * (dim + 1) / 2;
        if upper.len() != len {
            return Err(Error::invalid(format!(
                "expected {len} upper-triangle entries for dim {dim}, got {}",
                upper.len()
            )));
        }
        let mut m = Self::zeros(dim)?;
        m.upper[..len].copy_from_slice(upper);
        m.validate()?;
        Ok(m)
    }

    /// Builds from full rows; only the upper triangle is read.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut m = Self::zeros(dim)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid("rows must form a square matrix"));
            }
            for j in i..dim {
                m.set(i, j, row[j]);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        self.upper[packed_index(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.dim && j < self.dim, "index out of range");
        self.upper[packed_index(self.dim, i, j)] = value;
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim * (self.dim + 1) / 2]
    }

    pub fn is_finite(&self) -> bool {
        self.upper().iter().all(|v| v.is_finite())
    }

    fn validate(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("matrix has a non-finite entry"))
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    /// Returns `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut m = *self;
        for i in 0..self.dim {
            m.set(i, i, m.get(i, i) + shift);
        }
        m
    }

    /// Leading principal `k×k` block.
    pub fn leading_block(&self, k: usize) -> Result<SymMatrix> {
        if k == 0 || k > self.dim {
            return Err(Error::invalid(format!("block size {k} outside 1..={}", self.dim)));
        }
        let mut m = SymMatrix::zeros(k)?;
        for i in 0..k {
            for j in i..k {
                m.set(i, j, self.get(i, j));
            }
        }
        Ok(m)
    }

    fn to_dense(self) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in a.iter_mut().enumerate().take(self.dim) {
            for (j, v) in row.iter_mut().enumerate().take(self.dim) {
                *v = self.get(i, j);
            }
        }
        a
    }

    /// Full eigendecomposition, eigenvalues ascending.
    pub fn eigen(&self) -> Result<Eigen> {
        self.validate()?;
        let n = self.dim;
        let mut a = self.to_dense();
        let mut v = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in v.iter_mut().enumerate().take(n) {
            row[i] = 1.0;
        }

        let scale = self.frobenius_norm();
        if scale > 0.0 {
            let tol = JACOBI_TOL * scale;
            for _ in 0..JACOBI_MAX_SWEEPS {
                let mut off = 0.0;
                for p in 0..n {
                    for q in (p + 1)..n {
                        off += 2.0 * a[p][q] * a[p][q];
                    }
                }
                if off.sqrt() <= tol {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        if a[p][q] == 0.0 {
                            continue;
                        }
                        rotate(&mut a, &mut v, n, p, q);
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
        let values: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
        let vectors: Vec<Vec<f64>> = order
            .iter()
            .map(|&c| (0..n).map(|r| v[r][c]).collect())
            .collect();
        Ok(Eigen { values, vectors })
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigen()?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*self.eigenvalues()?.last().expect("dim >= 1"))
    }
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn rotate(a: &mut [[f64; MAX_DIM]; MAX_DIM], v: &mut [[f64; MAX_DIM]; MAX_DIM], n: usize, p: usize, q: usize) {
    let apq = a[p][q];
    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    // theta == 0 gives signum 1, t = 1: a 45 degree rotation
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    a[p][p] -= t * apq;
    a[q][q] += t * apq;
    a[p][q] = 0.0;
    a[q][p] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            let arp = a[r][p];
            let arq = a[r][q];
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
        }
    }
    for row in v.iter_mut().take(n) {
        let vp = row[p];
        let vq = row[q];
        row[p] = c * vp - s * vq;
        row[q] = s * vp + c * vq;
    }
}

/// Eigenpairs sorted by ascending eigenvalue; `vectors[i]` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigen {
    /// Frobenius norm of `m - Q Λ Qᵀ`.
    pub fn reconstruction_residual(&self, m: &SymMatrix) -> f64 {
        let n = m.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n)
                    .map(|k| self.vectors[k][i] * self.values[k] * self.vectors[k][j])
                    .sum();
                s += (m.get(i, j) - r).powi(2);
            }
        }
        s.sqrt()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect();
        f.debug_struct("SymMatrix").field("rows", &rows).finish()
    }
}

/// `λ_min(m) > margin`.
pub fn is_positive_definite(m: &SymMatrix, margin: f64) -> Result<bool> {
    if !(margin >= 0.0) {
        return Err(Error::invalid("positive-definiteness margin must be >= 0"));
    }
    Ok(m.min_eigenvalue()? > margin)
}

/// `λ_max(m) <= slack`.
pub fn is_negative_semidefinite(m: &SymMatrix, slack: f64) -> Result<bool> {
    if !(slack >= 0.0) {
        return Err(Error::invalid("semidefiniteness slack must be >= 0"));
    }
    Ok(m.max_eigenvalue()? <= slack)
}

/// `λ_max(m) < -margin`.
pub fn is_negative_definite(m: &SymMatrix, margin: f64) -> Result<bool> {
    if !(margin >= 0.0) {
        return Err(Error::invalid("negative-definiteness margin must be >= 0"));
    }
    Ok(m.max_eigenvalue()? < -margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout() {
        let m = SymMatrix::from_upper(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(2, 0), 3.0);
        assert_eq!(m.get(1, 1), 4.0);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.get(2, 2), 6.0);
        let m4 = SymMatrix::from_upper(4, &(0..10).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert_eq!(m4.get(3, 3), 9.0);
        assert_eq!(m4.get(2, 3), 8.0);
        assert_eq!(m4.get(1, 3), 6.0);
    }

    #[test]
    fn diagonal_eigenvalues() {
        let m = SymMatrix::diag(&[3.0, 2.0]).unwrap();
        assert_eq!(m.eigenvalues().unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn swap_matrix() {
        let m = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let ev = m.eigenvalues().unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-15);
        assert!((ev[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SymMatrix::from_upper(2, &[1.0, f64::NAN, 1.0]).is_err());
        let mut m = SymMatrix::zeros(2).unwrap();
        m.set(0, 1, f64::INFINITY);
        assert!(matches!(m.eigenvalues(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bad_dimension() {
        assert!(SymMatrix::zeros(0).is_err());
        assert!(SymMatrix::zeros(5).is_err());
    }

    #[test]
    fn definiteness() {
        assert!(is_positive_definite(&SymMatrix::identity(3).unwrap(), 0.0).unwrap());
        let m = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(!is_positive_definite(&m, 0.0).unwrap());
        assert!(is_negative_semidefinite(&SymMatrix::zeros(3).unwrap(), 0.0).unwrap());
        let d = SymMatrix::diag(&[-1.0, -2.0, 1e-12]).unwrap();
        assert!(is_negative_semidefinite(&d, 1e-9).unwrap());
        assert!(!is_negative_semidefinite(&d, 0.0).unwrap());
        assert!(is_positive_definite(&m, -1.0).is_err());
        assert!(is_negative_semidefinite(&m, -1e-3).is_err());
    }

    #[test]
    fn reconstruction() {
        let m = SymMatrix::from_upper(4, &[4.0, 1.0, -2.0, 0.5, 3.0, 0.3, -1.0, 2.0, 0.7, 1.0]).unwrap();
        let e = m.eigen().unwrap();
        assert!(e.reconstruction_residual(&m) <= 1e-10 * (1.0 + m.frobenius_norm()));
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn leading_block_and_shift() {
        let m = SymMatrix::from_upper(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = m.leading_block(2).unwrap();
        assert_eq!(b.upper(), &[1.0, 2.0, 4.0]);
        assert_eq!(m.shifted(1.0).get(2, 2), 7.0);
    }
}
