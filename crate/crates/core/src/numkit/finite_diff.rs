//! Central finite differences, used as the independent gradient oracle.

use super::linalg::Mat;

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_diff_gradient<F: FnMut(&Mat) -> f64>(mut f: F, x: &Mat, eps: f64) -> Mat {
    assert!((1e-7..=1e-4).contains(&eps), "eps {eps} outside [1e-7, 1e-4]");
    let mut grad = Mat::zeros(x.raw_dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + eps;
        let fp = f(&probe);
        probe[[r, c]] = orig - eps;
        let fm = f(&probe);
        probe[[r, c]] = orig;
        grad[[r, c]] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Max relative error between two gradients, with an absolute floor so that
/// near-zero entries do not blow up the ratio.
pub fn max_rel_error(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
