//! Dense helpers built on a one-sided Jacobi SVD.
//!
//! nalgebra's bidiagonal SVD occasionally returns factors that do not
//! recompose the input (seen on the sparse, structured systems assembled
//! here), so the decomposition is done by Hestenes' one-sided Jacobi method,
//! which is accurate to working precision for these small matrices.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = U diag(s) Vᵀ` with `s` descending; `U` is `m × n`, `V` is
/// `n × n`. Columns of `U` for zero singular values are zero.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    // pad short matrices so every column pair can be orthogonalized
    let rows = m.max(n);
    let mut w = DMatrix::zeros(rows, n);
    w.view_mut((0, 0), (m, n)).copy_from(a);
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|k| w.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let u = DMatrix::from_fn(m, n, |r, c| {
        let k = order[c];
        if norms[k] > 0.0 {
            w[(r, k)] / norms[k]
        } else {
            0.0
        }
    });
    let v = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Svd { u, s, v }
}

fn rotate(x: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..x.nrows() {
        let (xi, xj) = (x[(r, i)], x[(r, j)]);
        x[(r, i)] = c * xi - s * xj;
        x[(r, j)] = s * xi + c * xj;
    }
}

/// Numerical rank threshold: `max(m, n) * eps * sigma_max`.
pub(crate) fn rank_tolerance(singular_values: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    rows.max(cols) as f64 * f64::EPSILON * smax
}

fn rank_of(d: &Svd, rows: usize, cols: usize) -> usize {
    let tol = rank_tolerance(&d.s, rows, cols);
    d.s.iter().filter(|&&s| s > tol).count()
}

/// Norm of the component of `b` orthogonal to the column space of `a`.
///
/// Equals `||N^T b||` for any orthonormal basis `N` of the null space of
/// `a^T`.
pub(crate) fn range_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    if a.ncols() == 0 {
        return b.norm();
    }
    let d = svd(a);
    let r = rank_of(&d, a.nrows(), a.ncols());
    let mut resid = b.clone();
    for i in 0..r {
        let col = d.u.column(i);
        let c = col.dot(b);
        resid.axpy(-c, &col, 1.0);
    }
    resid.norm()
}

/// Orthonormal basis of the null space of `a`.
pub(crate) fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let d = svd(a);
    let r = rank_of(&d, a.nrows(), n);
    d.v.columns(r, n - r).into_owned()
}

/// Least-squares solution; fails when `a` lacks full column rank.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (m, n) = a.shape();
    let d = svd(a);
    let r = rank_of(&d, m, n);
    if r < n {
        return Err(Error::RankDeficient { rank: r, columns: n });
    }
    let mut x = DVector::zeros(n);
    for i in 0..n {
        let c = d.u.column(i).dot(b) / d.s[i];
        x.axpy(c, &d.v.column(i), 1.0);
    }
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Numerical rank of `a`.
pub(crate) fn matrix_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    rank_of(&svd(a), a.nrows(), a.ncols())
}
