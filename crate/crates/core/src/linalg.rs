//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot size below which a matrix is treated as singular.
const PIVOT_RTOL: f64 = 1e-13;

fn check_pivots(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> bool {
    let u = lu.u();
    let n = u.nrows();
    if n == 0 {
        return true;
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..n {
        let p = u[(i, i)].abs();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    hi > 0.0 && lo > PIVOT_RTOL * hi
}

/// Solves `a x = b` by partial-pivot LU.
pub fn solve(a: &Mat, b: &Vector) -> Option<Vector> {
    let lu = a.clone().lu();
    if !check_pivots(&lu) {
        return None;
    }
    lu.solve(b)
}

/// Solves `a X = B` for a matrix right-hand side.
pub fn solve_mat(a: &Mat, b: &Mat) -> Option<Mat> {
    let lu = a.clone().lu();
    if !check_pivots(&lu) {
        return None;
    }
    lu.solve(b)
}

pub fn inverse(a: &Mat) -> Option<Mat> {
    solve_mat(a, &Mat::identity(a.nrows(), a.ncols()))
}

pub fn solve_metric(a: &Mat, b: &Vector) -> Result<Vector> {
    solve(a, b).ok_or(Error::DegenerateMetric)
}

pub fn is_positive_definite(a: &Mat) -> bool {
    a.clone().cholesky().is_some()
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let s = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::NAN)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn sub_block(a: &Mat, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Mat {
    a.view((rows.start, cols.start), (rows.len(), cols.len()))
        .into_owned()
}

/// Smallest singular value, used for rank checks.
pub fn min_singular_value(a: &Mat) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |m, s| m.min(*s))
}
