//! Dense helpers shared by the modules. Small work stays in nalgebra; the
//! eigensolvers go through faer, which is markedly faster at a few hundred rows.

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && asymmetry(m) <= 1e-12 * (1.0 + m.amax()) && m.clone().cholesky().is_some()
}

pub fn require_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if is_positive_definite(m) {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite(what.to_string()))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let f = to_faer(&symmetrize(m));
    let eig = f.self_adjoint_eigen(Side::Lower).expect("symmetric eigensolver failed to converge");
    let s = eig.S().column_vector();
    let vals = DVector::from_fn(n, |i, _| s[i]);
    (vals, from_faer(eig.U()))
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let f = to_faer(&symmetrize(m));
    let mut v = f.self_adjoint_eigenvalues(Side::Lower).expect("symmetric eigensolver failed to converge");
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Lower-triangular `L` with `h = Lᵀ L`. Rows of `L` only mix entries of the
/// argument with equal or smaller index, which keeps block-causal structure
/// intact when `L` multiplies a causal map from the left.
pub fn reverse_cholesky(h: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let flipped = DMatrix::from_fn(n, n, |i, j| h[(n - 1 - i, n - 1 - j)]);
    let chol = flipped.cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let r = chol.l();
    Ok(DMatrix::from_fn(n, n, |i, j| r[(n - 1 - j, n - 1 - i)]))
}

/// Symmetric inverse square root of a positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(m);
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite(what.to_string()));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Ok(&vecs * d * vecs.transpose())
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Smallest singular value divided by the largest; 0 for an all-zero matrix.
pub fn rank_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0.0;
    }
    sv.min() / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reverse_cholesky_reconstructs_and_is_lower() {
        let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = reverse_cholesky(&h, "h").unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        assert_relative_eq!(l.transpose() * &l, h, epsilon = 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let rec = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rec, m, epsilon = 1e-10);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = inv_sqrt_spd(&m, "m").unwrap();
        assert_relative_eq!(&s * &s * &m, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert!(inv_sqrt_spd(&(-m), "m").is_err());
    }
}
