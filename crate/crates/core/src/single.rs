//! Single-cluster sensing.
//!
//! Fixing the HV orientation turns the path geometry into a linear system in
//! the bounce ranges and the reference path length. Every non-reference path
//! contributes one equation per axis stating that its origin coincides with
//! the reference path's origin:
//!
//! ```text
//! ν_r a_r − ν_p a_p + d_r (g_p − g_r) = −c ρ_p g_p,    a = e + g
//! ```
//!
//! with `e` the arrival unit vector and `g` the departure unit vector. At the
//! true orientation the right-hand side lies in the column space of the
//! matrix; the distance of `B` to that column space (the discriminant) is
//! minimized over the orientation.
//!
//! The same assembly carries extra unknowns for the rectangular cluster
//! layout and for sequential combining (see [`crate::multicluster`] and
//! [`crate::augment`]): each extra unknown `x_j` shifts path `p`'s origin by
//! `x_j o_{p,j}`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arrival_unit, departure_unit, wrap_angle, PathObservation, Point2, Point3, SPEED_OF_LIGHT};
use crate::linalg;
use crate::search;

/// Default coarse step of the orientation grid.
pub const DEFAULT_GRID_STEP: f64 = 0.5 * PI / 180.0;
/// Coarse step of the (azimuth, pitch) grid in 3D.
pub const DEFAULT_GRID_STEP_3D: f64 = 2.0 * PI / 180.0;
/// Grid minima refined per search.
const CANDIDATES: usize = 4;

/// Assembled system `A z = B` at one orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub omega: f64,
    pub varrho: Option<f64>,
    pub path_count: usize,
    /// Index of the zero-TDoA reference path.
    pub reference: usize,
    /// 2 for planar systems, 3 with elevations.
    pub dim: usize,
}

/// Least-squares solution of a [`LinearSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    /// `(ν_1, …, ν_P, d_ref, extras…)`.
    pub z: DVector<f64>,
    /// `‖A z − B‖`.
    pub residual: f64,
}

/// Recovered HV state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingEstimate {
    /// Centroid (single cluster: the antenna) at the reference transmission;
    /// `z = 0` for planar estimates.
    pub position: Point3,
    pub omega: f64,
    pub varrho: Option<f64>,
    /// Length of the reference path.
    pub reference_length: f64,
    pub bounce_ranges: Vec<f64>,
    /// Per-path origins mapped back to the centroid.
    pub origins: Vec<Point3>,
    pub residual: f64,
    /// Every bounce range lies strictly inside `(0, d_p)`.
    pub feasible: bool,
    pub paths_used: usize,
    /// Cluster vertices for the rectangular layout.
    pub vertices: Option<[Point2; 4]>,
    /// `(length, width)` for the rectangular layout.
    pub size: Option<(f64, f64)>,
    /// True when a negative size from the solve was clamped to the floor.
    pub size_clamped: bool,
    /// Relative speed for combined transmissions.
    pub velocity: Option<f64>,
}

impl SensingEstimate {
    pub fn position_2d(&self) -> Point2 {
        self.position.xy()
    }
}

/// Extra unknowns layered on top of the plain system.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Extension<'a> {
    Plain,
    /// Four corners; `clusters[p]` is path `p`'s cluster. A known
    /// `(length, width)` removes the two size unknowns.
    Rectangle {
        clusters: &'a [usize],
        known: Option<(f64, f64)>,
    },
    /// HV displaced by `v Δ q` along its heading in slot `q`.
    Motion {
        slots: &'a [usize],
        interval: f64,
        velocity: Option<f64>,
    },
}

impl Extension<'_> {
    pub(crate) fn columns(&self) -> usize {
        match self {
            Extension::Plain => 0,
            Extension::Rectangle { known: None, .. } => 2,
            Extension::Rectangle { known: Some(_), .. } => 0,
            Extension::Motion { velocity: None, .. } => 1,
            Extension::Motion { velocity: Some(_), .. } => 0,
        }
    }

    /// Origin shift of path `p` per unit of each extra unknown.
    fn offsets(&self, p: usize, omega: f64) -> [Point3; 2] {
        let (s, c) = omega.sin_cos();
        let u = Point3::new(c, s, 0.0);
        let n = Point3::new(-s, c, 0.0);
        match *self {
            Extension::Plain => [Point3::zeros(); 2],
            Extension::Rectangle { clusters, .. } => {
                let (sl, sw) = crate::geometry::vertex_signs(clusters[p]);
                [u * (sl / 2.0), n * (sw / 2.0)]
            }
            Extension::Motion { slots, interval, .. } => [u * (interval * slots[p] as f64), Point3::zeros()],
        }
    }

    /// Origin shift of path `p` from unknowns whose value is given.
    fn known_shift(&self, p: usize, omega: f64) -> Point3 {
        match *self {
            Extension::Motion { velocity: Some(v), .. } => self.offsets(p, omega)[0] * v,
            Extension::Rectangle {
                known: Some((l, w)), ..
            } => {
                let o = self.offsets(p, omega);
                o[0] * l + o[1] * w
            }
            _ => Point3::zeros(),
        }
    }
}

pub(crate) fn reference_index(obs: &[PathObservation]) -> Result<usize> {
    obs.iter().position(|o| o.tdoa == 0.0).ok_or(Error::MissingReference)
}

fn units(obs: &[PathObservation], omega: f64, varrho: Option<f64>) -> Result<(Vec<Point3>, Vec<Point3>)> {
    let mut e = Vec::with_capacity(obs.len());
    let mut g = Vec::with_capacity(obs.len());
    for (i, o) in obs.iter().enumerate() {
        match varrho {
            None => {
                e.push(arrival_unit(o.aoa, None));
                g.push(departure_unit(o.aod, omega, None));
            }
            Some(rho) => {
                let el = o.elevation.ok_or(Error::MissingTag {
                    index: i,
                    what: "elevation",
                })?;
                e.push(arrival_unit(o.aoa, Some(el.aoa)));
                g.push(departure_unit(o.aod, omega, Some((el.aod, rho))));
            }
        }
    }
    Ok((e, g))
}

pub(crate) fn assemble_with(
    obs: &[PathObservation],
    omega: f64,
    varrho: Option<f64>,
    ext: Extension<'_>,
) -> Result<LinearSystem> {
    let p_count = obs.len();
    if p_count < 2 {
        return Err(Error::Infeasible {
            required: 2,
            available: p_count,
        });
    }
    let r = reference_index(obs)?;
    let dim = if varrho.is_some() { 3 } else { 2 };
    let (e, g) = units(obs, omega, varrho)?;
    let extra = ext.columns();
    let blocks = p_count - 1;
    let mut a = DMatrix::zeros(dim * blocks, p_count + 1 + extra);
    let mut b = DVector::zeros(dim * blocks);
    let off_r = ext.offsets(r, omega);
    let known_r = ext.known_shift(r, omega);
    let a_r = e[r] + g[r];
    for (i, p) in (0..p_count).filter(|&p| p != r).enumerate() {
        let a_p = e[p] + g[p];
        let off_p = ext.offsets(p, omega);
        let known = ext.known_shift(p, omega) - known_r;
        let crho = SPEED_OF_LIGHT * obs[p].tdoa;
        for k in 0..dim {
            let row = k * blocks + i;
            a[(row, r)] = a_r[k];
            a[(row, p)] = -a_p[k];
            a[(row, p_count)] = g[p][k] - g[r][k];
            for j in 0..extra {
                a[(row, p_count + 1 + j)] = off_p[j][k] - off_r[j][k];
            }
            b[row] = -crho * g[p][k] - known[k];
        }
    }
    Ok(LinearSystem {
        matrix: a,
        rhs: b,
        omega,
        varrho,
        path_count: p_count,
        reference: r,
        dim,
    })
}

fn require(obs: &[PathObservation], required: usize) -> Result<()> {
    if obs.len() < required {
        Err(Error::Infeasible {
            required,
            available: obs.len(),
        })
    } else {
        Ok(())
    }
}

/// Planar system at orientation `omega`: `2(P−1) × (P+1)`, cos rows first.
pub fn assemble(obs: &[PathObservation], omega: f64) -> Result<LinearSystem> {
    assemble_with(obs, omega, None, Extension::Plain)
}

/// 3D system at `(omega, varrho)`: `3(P−1) × (P+1)`, x/y/z row blocks.
pub fn assemble_3d(obs: &[PathObservation], omega: f64, varrho: f64) -> Result<LinearSystem> {
    assemble_with(obs, omega, Some(varrho), Extension::Plain)
}

/// Distance of `B` to the column space of `A`.
pub fn system_discriminant(sys: &LinearSystem) -> f64 {
    linalg::range_residual(&sys.matrix, &sys.rhs)
}

/// Planar discriminant; needs at least four paths.
pub fn discriminant(obs: &[PathObservation], omega: f64) -> Result<f64> {
    require(obs, 4)?;
    Ok(system_discriminant(&assemble(obs, omega)?))
}

/// 3D discriminant; needs at least three paths.
pub fn discriminant_3d(obs: &[PathObservation], omega: f64, varrho: f64) -> Result<f64> {
    require(obs, 3)?;
    Ok(system_discriminant(&assemble_3d(obs, omega, varrho)?))
}

/// Least-squares `z = argmin ‖A z − B‖` through the SVD.
pub fn solve_ls(sys: &LinearSystem) -> Result<LsSolution> {
    let (z, residual) = linalg::least_squares(&sys.matrix, &sys.rhs)?;
    Ok(LsSolution { z, residual })
}

/// Grid + golden-section search for the orientation minimizing the planar
/// discriminant.
pub fn search_orientation(obs: &[PathObservation], grid_step: f64) -> Result<f64> {
    require(obs, 4)?;
    let candidates = orientation_candidates(obs, grid_step, Extension::Plain)?;
    Ok(candidates[0].0)
}

pub(crate) fn orientation_candidates(
    obs: &[PathObservation],
    grid_step: f64,
    ext: Extension<'_>,
) -> Result<Vec<(f64, f64)>> {
    // surface assembly errors (missing reference, tags) before searching
    assemble_with(obs, 0.0, None, ext)?;
    let f = |w: f64| {
        assemble_with(obs, w, None, ext)
            .map(|s| system_discriminant(&s))
            .unwrap_or(f64::INFINITY)
    };
    Ok(search::periodic_minimize(f, grid_step, CANDIDATES))
}

/// Everything recovered from one solve at a fixed orientation.
pub(crate) struct Solved {
    pub sys: LinearSystem,
    pub sol: LsSolution,
    pub origins: Vec<Point3>,
    pub anchor: Point3,
    pub feasible: bool,
}

pub(crate) fn solve_at(obs: &[PathObservation], omega: f64, varrho: Option<f64>, ext: Extension<'_>) -> Result<Solved> {
    let sys = assemble_with(obs, omega, varrho, ext)?;
    let sol = solve_ls(&sys)?;
    let (e, g) = units(obs, omega, varrho)?;
    let p_count = obs.len();
    let d_ref = sol.z[p_count];
    let mut feasible = true;
    let origins: Vec<Point3> = (0..p_count)
        .map(|p| {
            let nu = sol.z[p];
            let d = d_ref + SPEED_OF_LIGHT * obs[p].tdoa;
            if !(nu > 0.0 && nu < d) {
                feasible = false;
            }
            let offs = ext.offsets(p, omega);
            let mut shift = ext.known_shift(p, omega);
            for (j, off) in offs.iter().enumerate().take(ext.columns()) {
                shift += off * sol.z[p_count + 1 + j];
            }
            e[p] * nu - g[p] * (d - nu) - shift
        })
        .collect();
    let anchor = origins.iter().sum::<Point3>() / p_count as f64;
    Ok(Solved {
        sys,
        sol,
        origins,
        anchor,
        feasible,
    })
}

/// Solves at each candidate orientation and keeps the best: physically
/// feasible solutions first, then the smallest residual.
pub(crate) fn best_solution(
    obs: &[PathObservation],
    candidates: &[(f64, Option<f64>)],
    ext: Extension<'_>,
) -> Result<Solved> {
    let mut best: Option<Solved> = None;
    let mut last_err = None;
    for &(w, rho) in candidates {
        match solve_at(obs, w, rho, ext) {
            Ok(s) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (s.feasible && !b.feasible) || (s.feasible == b.feasible && s.sol.residual < b.sol.residual)
                    }
                };
                if better {
                    best = Some(s);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NonConvergence { iterations: 0 }))
}

pub(crate) fn into_estimate(s: Solved, obs: &[PathObservation]) -> SensingEstimate {
    let p = obs.len();
    SensingEstimate {
        position: s.anchor,
        omega: wrap_angle(s.sys.omega),
        varrho: s.sys.varrho,
        reference_length: s.sol.z[p],
        bounce_ranges: s.sol.z.rows(0, p).iter().copied().collect(),
        origins: s.origins,
        residual: s.sol.residual,
        feasible: s.feasible,
        paths_used: p,
        vertices: None,
        size: None,
        size_clamped: false,
        velocity: None,
    }
}

/// Planar pose from at least four single-bounce paths.
pub fn estimate_2d(obs: &[PathObservation]) -> Result<SensingEstimate> {
    require(obs, 4)?;
    let cands: Vec<(f64, Option<f64>)> = orientation_candidates(obs, DEFAULT_GRID_STEP, Extension::Plain)?
        .into_iter()
        .map(|(w, _)| (w, None))
        .collect();
    let s = best_solution(obs, &cands, Extension::Plain)?;
    Ok(into_estimate(s, obs))
}

/// `(I − P_A) B`: the least-squares residual vector, whose norm is the
/// discriminant. Unlike the coordinates in a null-space basis it varies
/// smoothly with the angles, which finite-difference Jacobians need.
fn residual_vector(obs: &[PathObservation], x: Vector2<f64>) -> DVector<f64> {
    match assemble_3d(obs, x[0], x[1]).and_then(|sys| {
        let sol = solve_ls(&sys)?;
        Ok(&sys.matrix * sol.z - &sys.rhs)
    }) {
        Ok(r) => r,
        Err(_) => DVector::from_element(1, f64::INFINITY),
    }
}

/// 3D pose (azimuth and pitch) from at least three paths with elevations.
pub fn estimate_3d(obs: &[PathObservation]) -> Result<SensingEstimate> {
    require(obs, 3)?;
    assemble_3d(obs, 0.0, 0.0)?;
    let step = DEFAULT_GRID_STEP_3D;
    let nw = (2.0 * PI / step).round() as usize;
    let nr = (PI / step).round() as usize + 1;
    let hw = 2.0 * PI / nw as f64;
    let hr = PI / (nr - 1) as f64;
    let grid: Vec<f64> = (0..nw * nr)
        .map(|i| {
            let (iw, ir) = (i / nr, i % nr);
            discriminant_3d(obs, iw as f64 * hw, ir as f64 * hr).unwrap_or(f64::INFINITY)
        })
        .collect();
    let at = |iw: usize, ir: usize| grid[(iw % nw) * nr + ir];
    let mut minima: Vec<(usize, usize)> = Vec::new();
    for iw in 0..nw {
        for ir in 0..nr {
            let v = at(iw, ir);
            let mut is_min = true;
            for dw in [nw - 1, 0, 1] {
                for dr in [-1i64, 0, 1] {
                    let rr = ir as i64 + dr;
                    if rr < 0 || rr >= nr as i64 || (dw == 0 && dr == 0) {
                        continue;
                    }
                    if at(iw + dw, rr as usize) < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                minima.push((iw, ir));
            }
        }
    }
    minima.sort_by(|a, b| at(a.0, a.1).total_cmp(&at(b.0, b.1)));
    minima.truncate(2 * CANDIDATES);
    let project = |x: Vector2<f64>| Vector2::new(wrap_angle(x[0]), x[1].clamp(0.0, PI));
    let cands: Vec<(f64, Option<f64>)> = minima
        .iter()
        .map(|&(iw, ir)| {
            let start = Vector2::new(iw as f64 * hw, ir as f64 * hr);
            let (x, _) = search::gauss_newton_2d(|x| residual_vector(obs, project(x)), start, 100);
            let x = project(x);
            (x[0], Some(x[1]))
        })
        .collect();
    let s = best_solution(obs, &cands, Extension::Plain)?;
    Ok(into_estimate(s, obs))
}
