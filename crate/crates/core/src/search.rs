//! One- and two-dimensional minimizers for the orientation search.
//!
//! A coarse grid finds the basins, golden-section (1D) or damped
//! Gauss-Newton on a residual vector (2D) polishes them.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::geometry::wrap_angle;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Local minima of a periodic grid, best first, at most `keep` of them.
fn periodic_minima(values: &[f64], keep: usize) -> Vec<usize> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            values[i] <= prev && values[i] <= next
        })
        .collect();
    if idx.is_empty() {
        idx = (0..n).collect();
    }
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx.truncate(keep);
    idx
}

/// Minimizes a `2π`-periodic function: grid scan with `step`, then
/// golden-section around the `keep` best grid minima. Returns the refined
/// candidates sorted by value.
pub fn periodic_minimize<F: Fn(f64) -> f64>(f: F, step: f64, keep: usize) -> Vec<(f64, f64)> {
    let n = ((TAU / step).ceil() as usize).max(3);
    let h = TAU / n as f64;
    let values: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
    let mut out: Vec<(f64, f64)> = periodic_minima(&values, keep)
        .into_iter()
        .map(|i| {
            let c = i as f64 * h;
            let (x, fx) = golden_section(&f, c - h, c + h, 1e-12);
            if fx <= values[i] {
                (wrap_angle(x), fx)
            } else {
                (c, values[i])
            }
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

/// Damped Gauss-Newton on `||r(x)||` over two variables, with a
/// forward-difference Jacobian. Returns the best point visited.
pub fn gauss_newton_2d<F: Fn(Vector2<f64>) -> DVector<f64>>(
    r: F,
    start: Vector2<f64>,
    iterations: usize,
) -> (Vector2<f64>, f64) {
    let mut x = start;
    let mut rx = r(x);
    let mut cost = rx.norm();
    let mut damping = 1e-6;
    for _ in 0..iterations {
        if cost == 0.0 {
            break;
        }
        let fd = 1e-7;
        let mut jac = DMatrix::zeros(rx.len(), 2);
        for k in 0..2 {
            let mut xk = x;
            xk[k] += fd;
            let rk = r(xk);
            jac.set_column(k, &((rk - &rx) / fd));
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &rx;
        let grad = Vector2::new(g[0], g[1]);
        let mut improved = false;
        for _ in 0..20 {
            let m = Matrix2::new(
                jtj[(0, 0)] * (1.0 + damping),
                jtj[(0, 1)],
                jtj[(1, 0)],
                jtj[(1, 1)] * (1.0 + damping),
            ) + Matrix2::identity() * 1e-18;
            let Some(inv) = m.try_inverse() else {
                damping *= 10.0;
                continue;
            };
            let cand = x - inv * grad;
            let rc = r(cand);
            let c = rc.norm();
            if c < cost {
                x = cand;
                rx = rc;
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                cost = c;
                damping = (damping * 0.3).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, cost)
}
