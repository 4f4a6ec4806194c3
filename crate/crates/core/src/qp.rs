//! Small dense convex quadratic programs by a primal active-set method.
//!
//! Solves `min ½ xᵀH x + cᵀx  s.t.  G x ≤ h` for symmetric positive
//! semidefinite `H`, starting from a feasible point. Equality-constrained
//! subproblems are solved in the null space of the working set; directions of
//! zero curvature are followed until a constraint blocks them (or reported as
//! unbounded).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

/// Problem data. Constraint rows are normalized internally.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
}

/// Stopping and tolerance knobs.
#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Feasibility / multiplier sign tolerance.
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Lagrange multipliers, one per constraint (zero when inactive).
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    /// Worst violation among stationarity, primal and dual feasibility and
    /// complementarity (constraints scaled to unit row norm).
    pub kkt_residual: f64,
}

fn objective(qp: &QuadraticProgram, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&qp.hessian * x)) + qp.linear.dot(x)
}

/// KKT residual of `(x, λ)` for the normalized program.
fn kkt_residual(
    g_mat: &DMatrix<f64>,
    h: &DVector<f64>,
    grad: &DVector<f64>,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let stationarity = (grad + g_mat.transpose() * lambda).amax();
    let slack = h - g_mat * x;
    let mut worst = stationarity;
    for i in 0..h.len() {
        worst = worst.max((-slack[i]).max(0.0));
        worst = worst.max((-lambda[i]).max(0.0));
        worst = worst.max((lambda[i] * slack[i]).abs());
    }
    worst
}

/// Runs the active-set iteration from the feasible point `start`.
pub fn solve(qp: &QuadraticProgram, start: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
    let n = qp.hessian.nrows();
    let m = qp.constraints.nrows();
    if qp.hessian.ncols() != n
        || qp.linear.len() != n
        || qp.constraints.ncols() != n
        || qp.bounds.len() != m
        || start.len() != n
    {
        return Err(Error::InvalidArgument("quadratic program dimensions disagree"));
    }
    // unit-norm constraint rows keep the tolerances meaningful
    let mut g_mat = qp.constraints.clone();
    let mut h = qp.bounds.clone();
    for i in 0..m {
        let norm = g_mat.row(i).norm();
        if norm > 0.0 {
            g_mat.row_mut(i).scale_mut(1.0 / norm);
            h[i] /= norm;
        }
    }
    let tol = opts.tolerance;
    let mut x = start.clone();
    let viol = (&g_mat * &x - &h).max();
    if m > 0 && viol > 1e3 * tol {
        return Err(Error::QpInfeasible);
    }
    let mut working: Vec<usize> = Vec::new();
    // constraints already tight at the start seed the working set
    for i in 0..m {
        if (h[i] - g_mat.row(i).dot(&x.transpose())).abs() <= tol {
            let mut trial = working.clone();
            trial.push(i);
            if rows(&g_mat, &trial).rank_ok() {
                working = trial;
            }
        }
    }
    let scale = qp.hessian.amax().max(qp.linear.amax()).max(1.0);
    for iter in 0..opts.max_iterations {
        let grad = &qp.hessian * &x + &qp.linear;
        let z = if working.is_empty() {
            DMatrix::identity(n, n)
        } else {
            linalg::null_space(&rows(&g_mat, &working).0)
        };
        let step = if z.ncols() == 0 {
            None
        } else {
            let hz = z.transpose() * &qp.hessian * &z;
            let gz = z.transpose() * &grad;
            let eig = SymmetricEigen::new(hz);
            let emax = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
            let flat = |v: f64| v <= 1e-12 * emax.max(scale);
            // descent along zero-curvature directions first
            let mut p0 = DVector::zeros(z.ncols());
            let mut pn = DVector::zeros(z.ncols());
            for k in 0..eig.eigenvalues.len() {
                let v = eig.eigenvectors.column(k);
                let c = v.dot(&gz);
                if flat(eig.eigenvalues[k]) {
                    p0 -= v * c;
                } else {
                    pn -= v * (c / eig.eigenvalues[k]);
                }
            }
            if p0.norm() > 1e-12 * scale {
                Some((&z * p0, true))
            } else {
                let p = &z * pn;
                if p.amax() > 1e-14 * (1.0 + x.amax()) {
                    Some((p, false))
                } else {
                    None
                }
            }
        };
        match step {
            None => {
                // stationary on the working set: check multiplier signs
                let mut lambda = DVector::zeros(m);
                if !working.is_empty() {
                    let gw = rows(&g_mat, &working).0;
                    let (lw, _) = linalg::least_squares(&gw.transpose(), &(-&grad))?;
                    for (j, &i) in working.iter().enumerate() {
                        lambda[i] = lw[j];
                    }
                }
                let most_negative = working
                    .iter()
                    .enumerate()
                    .filter(|(_, &i)| lambda[i] < -tol)
                    .min_by(|a, b| lambda[*a.1].total_cmp(&lambda[*b.1]))
                    .map(|(j, _)| j);
                match most_negative {
                    None => {
                        // report multipliers of the original (unscaled) rows
                        let kkt = kkt_residual(&g_mat, &h, &grad, &x, &lambda);
                        let mut mult = lambda.clone();
                        for i in 0..m {
                            let norm = qp.constraints.row(i).norm();
                            if norm > 0.0 {
                                mult[i] /= norm;
                            }
                        }
                        return Ok(QpSolution {
                            objective: objective(qp, &x),
                            x,
                            multipliers: mult,
                            active: working,
                            iterations: iter,
                            kkt_residual: kkt,
                        });
                    }
                    Some(j) => {
                        working.remove(j);
                    }
                }
            }
            Some((p, unbounded_direction)) => {
                let mut alpha = if unbounded_direction { f64::INFINITY } else { 1.0 };
                let mut blocking = None;
                for i in 0..m {
                    if working.contains(&i) {
                        continue;
                    }
                    let gp = g_mat.row(i).dot(&p.transpose());
                    if gp > 1e-14 * p.amax() {
                        let slack = (h[i] - g_mat.row(i).dot(&x.transpose())).max(0.0);
                        let a = slack / gp;
                        if a < alpha {
                            alpha = a;
                            blocking = Some(i);
                        }
                    }
                }
                if !alpha.is_finite() {
                    return Err(Error::QpUnbounded);
                }
                x += p * alpha;
                if let Some(i) = blocking {
                    working.push(i);
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
    })
}

struct Rows(DMatrix<f64>);

impl Rows {
    fn rank_ok(&self) -> bool {
        linalg::matrix_rank(&self.0) == self.0.nrows()
    }
}

fn rows(g: &DMatrix<f64>, idx: &[usize]) -> Rows {
    Rows(DMatrix::from_fn(idx.len(), g.ncols(), |r, c| g[(idx[r], c)]))
}
