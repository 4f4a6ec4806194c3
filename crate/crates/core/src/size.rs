//! Size sensing for clusters that share one waveform set.
//!
//! Paths cannot be attributed to clusters, so after the centroid `p0` and
//! heading are estimated from all paths together, the vehicle extent is
//! bounded by the smallest disk (or heading-aligned box) around `p0` that can
//! contain every path origin for *some* admissible choice of the reference
//! length `d_1` and bounce ranges `ν_p`.
//!
//! For a fixed `D = d_1 + cρ_p` a path's origin `ν a_p − D g_p` is affine in
//! `ν`, so "origin within `r` of `p0`" is an ellipse in `(D, ν)`; intersected
//! with `0 ≤ ν ≤ D` it projects onto a closed interval of `D`. The disk
//! radius is the smallest `r` at which the intervals of all paths (shifted to
//! `d_1`) still intersect, found by bisection. The box is a convex QP in
//! `(d_1, ν, sizes)` handled by [`crate::qp`].

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{arrival_unit, departure_unit, rotation_3d, PathObservation, Point2, Point3, SPEED_OF_LIGHT};
use crate::qp::{self, QpOptions, QuadraticProgram};
use crate::search;
use crate::single::{self, reference_index, SensingEstimate};

/// Distance kept between a bounce range and its bounds.
pub const RANGE_MARGIN: f64 = 1e-8;
/// Tolerance for reporting boundary / vertex paths.
pub const STRUCTURE_TOL: f64 = 1e-5;
const BISECTION_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 200;

/// Closed interval of reference lengths; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// One path's geometry at a fixed orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ray {
    e: Point3,
    g: Point3,
    /// `c ρ_p`.
    offset: f64,
}

fn rays(obs: &[PathObservation], omega: f64, varrho: Option<f64>) -> Result<Vec<Ray>> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            let (e, g) = match varrho {
                None => (arrival_unit(o.aoa, None), departure_unit(o.aod, omega, None)),
                Some(r) => {
                    let el = o.elevation.ok_or(Error::MissingTag {
                        index: i,
                        what: "elevation",
                    })?;
                    (
                        arrival_unit(o.aoa, Some(el.aoa)),
                        departure_unit(o.aod, omega, Some((el.aod, r))),
                    )
                }
            };
            Ok(Ray {
                e,
                g,
                offset: SPEED_OF_LIGHT * o.tdoa,
            })
        })
        .collect()
}

/// Roots of `t² + 2 β t + γ ≤ 0`.
fn quadratic_window(beta: f64, gamma: f64) -> Option<(f64, f64)> {
    let disc = beta * beta - gamma;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-beta - s, -beta + s))
}

impl Ray {
    fn a(&self) -> Point3 {
        self.e + self.g
    }

    fn origin(&self, d_ref: f64, nu: f64) -> Point3 {
        let d = d_ref + self.offset;
        self.e * nu - self.g * (d - nu)
    }

    /// Bounce range closest to `p0` for a given total length, clamped to
    /// the admissible range.
    fn best_range(&self, total: f64, p0: &Point3) -> f64 {
        let a = self.a();
        let aa = a.norm_squared();
        let nu = if aa > 1e-24 {
            a.dot(&(self.g * total + p0)) / aa
        } else {
            total / 2.0
        };
        let (lo, hi) = (RANGE_MARGIN, total - RANGE_MARGIN);
        if lo > hi {
            total / 2.0
        } else {
            nu.clamp(lo, hi)
        }
    }

    /// Interval of total lengths `D` for which some `0 ≤ ν ≤ D` puts the
    /// origin within `r` of `p0`.
    fn length_interval(&self, r: f64, p0: &Point3) -> Option<Interval> {
        let a = self.a();
        let g = self.g;
        let r2 = r * r;
        let pp = p0.norm_squared();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut take = |d: f64| {
            lo = lo.min(d);
            hi = hi.max(d);
        };
        // edge ν = 0: |D g + p0|² ≤ r²
        if let Some((t0, t1)) = quadratic_window(g.dot(p0), pp - r2) {
            if t1 >= 0.0 {
                take(t0.max(0.0));
                take(t1);
            }
        }
        // edge ν = D: |D e − p0|² ≤ r²
        if let Some((t0, t1)) = quadratic_window(-self.e.dot(p0), pp - r2) {
            if t1 >= 0.0 {
                take(t0.max(0.0));
                take(t1);
            }
        }
        // interior extremes of the ellipse q(D, ν) = |ν a − D g − p0|² ≤ r²
        let m = Matrix2::new(g.norm_squared(), -a.dot(&g), -a.dot(&g), a.norm_squared());
        let det = m.determinant();
        let scale = m.amax().max(1.0);
        if det > 1e-12 * scale * scale {
            let b = Vector2::new(g.dot(p0), -a.dot(p0));
            let minv = m.try_inverse()?;
            let center = -(minv * b);
            // evaluated directly: `pp − bᵀM⁻¹b` cancels badly near zero
            let qmin = (a * center[1] - g * center[0] - p0).norm_squared();
            let slack = r2 - qmin;
            if slack >= 0.0 {
                let dir = minv.column(0) / minv[(0, 0)].sqrt();
                for sign in [-1.0, 1.0] {
                    let pt = center + dir * (sign * slack.sqrt());
                    let (d, nu) = (pt[0], pt[1]);
                    if nu >= 0.0 && nu <= d {
                        take(d);
                    }
                }
            }
        } else if a.norm_squared() > 1e-12 {
            // e ≈ g: the origin is (2ν − D) g; every large D is reachable
            // once |t g − p0| ≤ r for some |t| ≤ D
            if let Some((t0, t1)) = quadratic_window(-g.dot(p0), pp - r2) {
                let nearest = if t0 <= 0.0 && t1 >= 0.0 {
                    0.0
                } else {
                    t0.abs().min(t1.abs())
                };
                take(nearest);
                take(f64::INFINITY);
            }
        }
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Reference lengths `d_1` for which path `obs` can originate within `r` of
/// `p0` at orientation `omega`.
pub fn feasible_d1_interval(obs: &PathObservation, omega: f64, r: f64, p0: Point2) -> Option<Interval> {
    let ray = rays(core::slice::from_ref(obs), omega, None).ok()?[0];
    let p = Point3::new(p0.x, p0.y, 0.0);
    ray.length_interval(r, &p).map(|i| Interval {
        lo: i.lo - ray.offset,
        hi: i.hi - ray.offset,
    })
}

fn common_interval(rays: &[Ray], r: f64, p0: &Point3) -> Option<Interval> {
    let mut acc = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    for ray in rays {
        let i = ray.length_interval(r, p0)?;
        let shifted = Interval {
            lo: i.lo - ray.offset,
            hi: i.hi - ray.offset,
        };
        acc = acc.intersect(&shifted)?;
    }
    Some(acc)
}

/// Smallest enclosing disk (or sphere) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskResult {
    pub radius: f64,
    pub reference_length: f64,
    pub bounce_ranges: Vec<f64>,
    pub origins: Vec<Point3>,
    /// Paths whose origin lies on the boundary (within 1e-5 m).
    pub boundary_paths: Vec<usize>,
    pub iterations: usize,
}

fn disk_impl(obs: &[PathObservation], p0: Point3, omega: f64, varrho: Option<f64>) -> Result<DiskResult> {
    if obs.is_empty() {
        return Err(Error::EmptyScene);
    }
    reference_index(obs)?;
    if !(p0.iter().all(|v| v.is_finite()) && omega.is_finite()) {
        return Err(Error::InfeasibleCentroid);
    }
    let rays = rays(obs, omega, varrho)?;
    let mut iterations = 0;
    let mut r_lo = 0.0;
    let mut r_hi = 1.0;
    while common_interval(&rays, r_hi, &p0).is_none() {
        r_lo = r_hi;
        r_hi *= 2.0;
        iterations += 1;
        if iterations > MAX_STEPS {
            return Err(Error::InfeasibleCentroid);
        }
    }
    if common_interval(&rays, 0.0, &p0).is_some() {
        r_hi = 0.0;
    }
    while r_hi - r_lo > BISECTION_TOL * r_hi.max(1.0) {
        iterations += 1;
        if iterations > MAX_STEPS {
            return Err(Error::NonConvergence { iterations });
        }
        let mid = 0.5 * (r_lo + r_hi);
        if common_interval(&rays, mid, &p0).is_some() {
            r_hi = mid;
        } else {
            r_lo = mid;
        }
    }
    let window = common_interval(&rays, r_hi, &p0).ok_or(Error::NonConvergence { iterations })?;
    let d_ref = 0.5 * (window.lo + window.hi);
    let bounce_ranges: Vec<f64> = rays.iter().map(|ray| ray.best_range(d_ref + ray.offset, &p0)).collect();
    let origins: Vec<Point3> = rays
        .iter()
        .zip(&bounce_ranges)
        .map(|(ray, &nu)| ray.origin(d_ref, nu))
        .collect();
    let radius = origins.iter().map(|o| (o - p0).norm()).fold(0.0, f64::max);
    let boundary_paths = origins
        .iter()
        .enumerate()
        .filter(|(_, o)| (*o - p0).norm() >= radius - STRUCTURE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(DiskResult {
        radius,
        reference_length: d_ref,
        bounce_ranges,
        origins,
        boundary_paths,
        iterations,
    })
}

/// Smallest disk around `p0` containing some admissible set of path origins.
pub fn min_disk(obs: &[PathObservation], p0: Point2, omega: f64) -> Result<DiskResult> {
    disk_impl(obs, Point3::new(p0.x, p0.y, 0.0), omega, None)
}

/// 3D counterpart of [`min_disk`].
pub fn min_sphere(obs: &[PathObservation], p0: Point3, omega: f64, varrho: f64) -> Result<DiskResult> {
    disk_impl(obs, p0, omega, Some(varrho))
}

/// Smallest heading-aligned box (or cuboid) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxResult {
    /// Full extents along the body axes: `[length, width]` or
    /// `[length, width, height]`.
    pub sizes: Vec<f64>,
    pub reference_length: f64,
    pub bounce_ranges: Vec<f64>,
    pub origins: Vec<Point3>,
    /// Body-frame origin coordinates relative to `p0`.
    pub body: Vec<Point3>,
    /// Paths sitting on a box corner (within 1e-5 m on every axis).
    pub vertex_paths: Vec<usize>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl BoxResult {
    pub fn length(&self) -> f64 {
        self.sizes[0]
    }

    pub fn width(&self) -> f64 {
        self.sizes[1]
    }

    /// Sign pattern of the corner each vertex path sits on.
    pub fn vertex_signs(&self) -> Vec<Vec<bool>> {
        let dim = self.sizes.len();
        let mut out: Vec<Vec<bool>> = Vec::new();
        for &p in &self.vertex_paths {
            let s: Vec<bool> = (0..dim).map(|k| self.body[p][k] > 0.0).collect();
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    /// At least two origins on distinct corners.
    pub fn has_two_vertices(&self) -> bool {
        self.vertex_signs().len() >= 2
    }
}

fn box_impl(obs: &[PathObservation], p0: Point3, omega: f64, varrho: Option<f64>) -> Result<BoxResult> {
    let disk = disk_impl(obs, p0, omega, varrho)?;
    let rays = rays(obs, omega, varrho)?;
    let dim = if varrho.is_some() { 3 } else { 2 };
    // rows: body axes in world coordinates
    let axes: Vec<Point3> = match varrho {
        None => {
            let (s, c) = omega.sin_cos();
            alloc::vec![Point3::new(c, s, 0.0), Point3::new(-s, c, 0.0)]
        }
        Some(r) => {
            let rot = rotation_3d(omega, r);
            (0..3).map(|k| rot.column(k).into_owned()).collect()
        }
    };
    let p = obs.len();
    let n = 1 + p + dim;
    let m = 2 * dim * p + 2 * p;
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut row = 0;
    for (i, ray) in rays.iter().enumerate() {
        let a = ray.a();
        for (k, ax) in axes.iter().enumerate() {
            let ca = ax.dot(&a);
            let cg = ax.dot(&ray.g);
            let rhs = ax.dot(&(ray.g * ray.offset + p0));
            for sign in [1.0, -1.0] {
                g[(row, 1 + i)] = sign * ca;
                g[(row, 0)] = -sign * cg;
                g[(row, 1 + p + k)] = -0.5;
                h[row] = sign * rhs;
                row += 1;
            }
        }
        g[(row, 1 + i)] = -1.0;
        h[row] = -RANGE_MARGIN;
        row += 1;
        g[(row, 1 + i)] = 1.0;
        g[(row, 0)] = -1.0;
        h[row] = ray.offset - RANGE_MARGIN;
        row += 1;
    }
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..dim {
        hess[(1 + p + k, 1 + p + k)] = 2.0;
    }
    // warm start: disk witness, box comfortably around it
    let mut x0 = DVector::zeros(n);
    x0[0] = disk.reference_length;
    for i in 0..p {
        x0[1 + i] = disk.bounce_ranges[i];
    }
    for (k, ax) in axes.iter().enumerate() {
        let extent = disk.origins.iter().map(|o| ax.dot(&(o - p0)).abs()).fold(0.0, f64::max);
        x0[1 + p + k] = 2.0 * extent + 1.0;
    }
    let prog = QuadraticProgram {
        hessian: hess,
        linear: DVector::zeros(n),
        constraints: g,
        bounds: h,
    };
    let sol = qp::solve(&prog, &x0, &QpOptions::default())?;
    let x = sol.x;
    let d_ref = x[0];
    let bounce_ranges: Vec<f64> = (0..p).map(|i| x[1 + i]).collect();
    let sizes: Vec<f64> = (0..dim).map(|k| x[1 + p + k].max(0.0)).collect();
    let origins: Vec<Point3> = rays
        .iter()
        .zip(&bounce_ranges)
        .map(|(ray, &nu)| ray.origin(d_ref, nu))
        .collect();
    let body: Vec<Point3> = origins
        .iter()
        .map(|o| {
            let v = o - p0;
            let mut b = Point3::zeros();
            for (k, ax) in axes.iter().enumerate() {
                b[k] = ax.dot(&v);
            }
            b
        })
        .collect();
    let vertex_paths = body
        .iter()
        .enumerate()
        .filter(|(_, b)| (0..dim).all(|k| b[k].abs() >= sizes[k] / 2.0 - STRUCTURE_TOL))
        .map(|(i, _)| i)
        .collect();
    Ok(BoxResult {
        sizes,
        reference_length: d_ref,
        bounce_ranges,
        origins,
        body,
        vertex_paths,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// Smallest box around `p0`, aligned with heading `omega`, containing some
/// admissible set of path origins; minimizes `length² + width²`.
pub fn min_box(obs: &[PathObservation], p0: Point2, omega: f64) -> Result<BoxResult> {
    box_impl(obs, Point3::new(p0.x, p0.y, 0.0), omega, None)
}

/// [`min_box`] with the heading also refined by golden-section search within
/// `±span` of `omega`.
pub fn min_box_refined(obs: &[PathObservation], p0: Point2, omega: f64, span: f64) -> Result<(f64, BoxResult)> {
    let cost = |w: f64| {
        min_box(obs, p0, w)
            .map(|b| b.sizes.iter().map(|s| s * s).sum::<f64>())
            .unwrap_or(f64::INFINITY)
    };
    let (w, _) = search::golden_section(cost, omega - span, omega + span, 1e-6);
    let best = if cost(w) <= cost(omega) { w } else { omega };
    Ok((best, min_box(obs, p0, best)?))
}

/// 3D counterpart of [`min_box`]: extents along the rotated body axes.
pub fn min_cuboid(obs: &[PathObservation], p0: Point3, omega: f64, varrho: f64) -> Result<BoxResult> {
    box_impl(obs, p0, omega, Some(varrho))
}

/// Size estimate of either shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SizeEstimate {
    Disk { radius: f64 },
    Box { length: f64, width: f64 },
}

impl SizeEstimate {
    /// Footprint area, m².
    pub fn area(&self) -> f64 {
        match *self {
            SizeEstimate::Disk { radius } => PI * radius * radius,
            SizeEstimate::Box { length, width } => length * width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingError {
    /// Estimated minus true area, m².
    pub area_error: f64,
    pub overestimated: bool,
}

/// Area difference to a `length × width` vehicle.
pub fn sizing_error(est: &SizeEstimate, length: f64, width: f64) -> SizingError {
    let area_error = est.area() - length * width;
    SizingError {
        area_error,
        overestimated: area_error >= 0.0,
    }
}

/// Centroid and heading from all paths, then the enclosing box; vertices are
/// reported in cluster order.
pub fn estimate_coupled_box(obs: &[PathObservation]) -> Result<(SensingEstimate, BoxResult)> {
    let mut est = single::estimate_2d(obs)?;
    let b = min_box(obs, est.position_2d(), est.omega)?;
    let (u, n) = {
        let (s, c) = est.omega.sin_cos();
        (Point2::new(c, s), Point2::new(-s, c))
    };
    let (l, w) = (b.length(), b.width());
    let v = |k: usize| {
        let (sl, sw) = crate::geometry::vertex_signs(k);
        est.position_2d() + u * (sl * l / 2.0) + n * (sw * w / 2.0)
    };
    est.vertices = Some([v(0), v(1), v(2), v(3)]);
    est.size = Some((l, w));
    Ok((est, b))
}

/// Centroid and heading from all paths, then the enclosing disk.
pub fn estimate_coupled_disk(obs: &[PathObservation]) -> Result<(SensingEstimate, DiskResult)> {
    let est = single::estimate_2d(obs)?;
    let d = min_disk(obs, est.position_2d(), est.omega)?;
    Ok((est, d))
}
