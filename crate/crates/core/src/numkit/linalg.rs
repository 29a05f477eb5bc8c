//! Dense linear algebra on small matrices: LU factorization with partial
//! pivoting, inversion with log-determinant, and linear solves.

use ndarray::Array2;

use crate::error::{CoreError, Result};

pub type Mat = Array2<f64>;

/// Pivot magnitude below which a matrix is treated as singular.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// LU factorization with partial pivoting. Returns (lu, perm, sign) where
/// `lu` packs L (unit diagonal) and U, `perm` is the row permutation and
/// `sign` is the permutation sign.
fn lu_factor(m: &Mat) -> Result<(Mat, Vec<usize>, f64)> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "lu_factor requires a square matrix");
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        // partial pivot: largest magnitude in column k at or below the diagonal
        let mut p = k;
        let mut best = lu[[k, k]].abs();
        for r in (k + 1)..n {
            let v = lu[[r, k]].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best <= SINGULARITY_TOL {
            return Err(CoreError::SingularMatrix);
        }
        if p != k {
            for c in 0..n {
                lu.swap([k, c], [p, c]);
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let piv = lu[[k, k]];
        for r in (k + 1)..n {
            let factor = lu[[r, k]] / piv;
            lu[[r, k]] = factor;
            for c in (k + 1)..n {
                lu[[r, c]] -= factor * lu[[k, c]];
            }
        }
    }
    Ok((lu, perm, sign))
}

fn lu_solve_vec(lu: &Mat, perm: &[usize], b: &[f64]) -> Vec<f64> {
    let n = lu.nrows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[perm[i]];
        for j in 0..i {
            s -= lu[[i, j]] * y[j];
        }
        y[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s -= lu[[i, j]] * y[j];
        }
        y[i] = s / lu[[i, i]];
    }
    y
}

/// Inverts a square matrix and reports log|det| together with the sign of
/// the determinant.
pub fn invert_with_logdet(m: &Mat) -> Result<(Mat, f64, f64)> {
    let n = m.nrows();
    let (lu, perm, mut sign) = lu_factor(m)?;
    let mut logdet = 0.0;
    for i in 0..n {
        let d = lu[[i, i]];
        logdet += d.abs().ln();
        if d < 0.0 {
            sign = -sign;
        }
    }
    let mut inv = Mat::zeros((n, n));
    let mut e = vec![0.0; n];
    for col in 0..n {
        e[col] = 1.0;
        let x = lu_solve_vec(&lu, &perm, &e);
        for row in 0..n {
            inv[[row, col]] = x[row];
        }
        e[col] = 0.0;
    }
    Ok((inv, logdet, sign))
}

/// Solves `m x = b` for a single right-hand side.
pub fn solve(m: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let (lu, perm, _) = lu_factor(m).map_err(|_| CoreError::SingularSystem)?;
    Ok(lu_solve_vec(&lu, &perm, b))
}

/// log|det| alone, without forming the inverse.
pub fn logdet(m: &Mat) -> Result<f64> {
    let (lu, _, _) = lu_factor(m)?;
    Ok((0..m.nrows()).map(|i| lu[[i, i]].abs().ln()).sum())
}
