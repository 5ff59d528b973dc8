//! Small dense helpers on top of nalgebra: numerical rank, null spaces,
//! orthonormal column bases and Hermitian extremal eigenvalues.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Singular values between `RANK_TOL` and this fraction are ambiguous.
pub const AMBIGUITY_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn complexify(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Full SVD data for an arbitrary complex matrix: descending singular values
/// and the full set of right singular vectors (as columns, length `ncols`).
fn full_svd(a: &CMatrix) -> (Vec<f64>, CMatrix, CMatrix) {
    let (rows, cols) = a.shape();
    let n = rows.max(cols);
    // Pad to a square matrix so that U and V are complete.
    let mut square = CMatrix::zeros(n, n);
    square.view_mut((0, 0), (rows, cols)).copy_from(a);
    let svd = square.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = CMatrix::from_fn(n, n, |r, k| v_t[(order[k], r)].conj());
    let u = CMatrix::from_fn(n, n, |r, k| u[(r, order[k])]);
    (sigma, u, v)
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with a relative threshold; errors when a singular value
/// sits in the ambiguous band instead of picking a side.
pub fn rank(a: &CMatrix) -> Result<usize> {
    let s = singular_values(a);
    rank_from_singular_values(&s)
}

fn rank_from_singular_values(s: &[f64]) -> Result<usize> {
    let Some(&max) = s.first() else { return Ok(0) };
    if max == 0.0 {
        return Ok(0);
    }
    let mut r = 0;
    for &sigma in s {
        let rel = sigma / max;
        if rel > AMBIGUITY_TOL {
            r += 1;
        } else if rel > RANK_TOL {
            return Err(Error::AmbiguousRank {
                low: r,
                high: r + 1,
                sigma: rel,
            });
        }
    }
    Ok(r)
}

/// Rank with a plain relative threshold and no ambiguity band.
pub fn rank_loose(a: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|&&x| x > rel_tol * max).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the null space (columns).
pub fn null_space(a: &CMatrix) -> Result<CMatrix> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return Ok(CMatrix::identity(cols, cols));
    }
    let (sigma, _, v) = full_svd(a);
    let r = rank_from_singular_values(&sigma[..a.nrows().min(cols)])?;
    Ok(v.view((0, r), (cols, cols - r)).into_owned())
}

/// Orthonormal basis of the column space.
pub fn column_space(a: &CMatrix) -> Result<CMatrix> {
    let rows = a.nrows();
    if a.ncols() == 0 {
        return Ok(CMatrix::zeros(rows, 0));
    }
    let (sigma, u, _) = full_svd(a);
    let r = rank_from_singular_values(&sigma[..rows.min(a.ncols())])?;
    Ok(u.view((0, 0), (rows, r)).into_owned())
}

/// Normalizes each column to unit length; zero columns are left alone.
pub fn normalize_columns(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::new(n, 0.0);
        }
    }
    out
}

pub fn normalize_rows(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= Complex64::new(n, 0.0);
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &RMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(a: &RMatrix) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Columns of `a` followed by columns of `b`.
pub fn hstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// Rows of `a` followed by rows of `b`.
pub fn vstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = CMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        // (1, i) . (i, -1) = 0
        let a = CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let ns = null_space(&a).unwrap();
        assert_eq!(ns.shape(), (2, 1));
        assert!(max_abs(&(&a * &ns)) < 1e-14);
        assert!((ns.column(0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_detects_ambiguity() {
        let a = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(1e-9, 0.0)]));
        assert!(matches!(rank(&a), Err(Error::AmbiguousRank { low: 1, high: 2, .. })));
        let b = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(1e-13, 0.0)]));
        assert_eq!(rank(&b).unwrap(), 1);
        assert_eq!(rank(&CMatrix::zeros(2, 3)).unwrap(), 0);
    }

    #[test]
    fn column_space_is_orthonormal() {
        let a = CMatrix::from_row_slice(
            3,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 2.0), c(1.0, 1.0), c(2.0, 2.0)],
        );
        let q = column_space(&a).unwrap();
        assert_eq!(q.ncols(), 1);
        let gram = q.adjoint() * &q;
        assert!((gram[(0, 0)].re - 1.0).abs() < 1e-14);
    }
}
