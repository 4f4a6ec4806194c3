//! Exact single-bounce path geometry.
//!
//! The SV array sits at the origin and its heading is the +X axis. A path
//! leaves the HV antenna along a departure direction, bounces once off a
//! point scatterer and reaches the SV along an arrival direction. The HV
//! orientation `omega` is measured counterclockwise from +X, and angles of
//! departure are measured counterclockwise from the HV heading.
//!
//! In 3D the elevations are polar angles measured from +Z; the HV pitch
//! `varrho` is added to the departure elevation the same way `omega` is added
//! to the departure azimuth.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Point2 = Vector2<f64>;
pub type Point3 = Vector3<f64>;

const DEGENERATE_DISTANCE: f64 = 1e-9;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle % TAU;
    let w = if r < 0.0 { r + TAU } else { r };
    // tiny negative inputs round up to exactly TAU
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` wrapped into `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Planar HV pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub position: Point2,
    /// Heading, counterclockwise from the SV +X axis, in `[0, 2π)`.
    pub omega: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, omega: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            omega: wrap_angle(omega),
        }
    }

    pub fn heading(&self) -> Point2 {
        Point2::new(self.omega.cos(), self.omega.sin())
    }
}

/// HV pose with azimuth and pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub position: Point3,
    pub omega: f64,
    /// Pitch added to departure elevations, in `[0, π]`.
    pub varrho: f64,
}

impl Pose3D {
    pub fn new(position: Point3, omega: f64, varrho: f64) -> Self {
        Self {
            position,
            omega: wrap_angle(omega),
            varrho: varrho.clamp(0.0, PI),
        }
    }
}

/// Elevation angles of one path (polar angles from +Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elevation {
    /// Arrival elevation at the SV.
    pub aoa: f64,
    /// Departure elevation relative to the HV pitch.
    pub aod: f64,
}

/// Unit vector from the SV towards the scatterer.
pub fn arrival_unit(aoa: f64, elevation: Option<f64>) -> Point3 {
    match elevation {
        None => Point3::new(aoa.cos(), aoa.sin(), 0.0),
        Some(el) => {
            let s = el.sin();
            Point3::new(s * aoa.cos(), s * aoa.sin(), el.cos())
        }
    }
}

/// World-frame unit vector from the HV towards the scatterer.
pub fn departure_unit(aod: f64, omega: f64, elevation: Option<(f64, f64)>) -> Point3 {
    let az = aod + omega;
    match elevation {
        None => Point3::new(az.cos(), az.sin(), 0.0),
        Some((psi, varrho)) => {
            let el = psi + varrho;
            let s = el.sin();
            Point3::new(s * az.cos(), s * az.sin(), el.cos())
        }
    }
}

/// Ground-truth parameters of one single-bounce path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathTruth {
    pub aoa: f64,
    pub aod: f64,
    pub elevation: Option<Elevation>,
    /// Total propagation distance HV -> scatterer -> SV.
    pub length: f64,
    /// Distance from the scatterer to the SV.
    pub bounce_range: f64,
    /// z is zero for planar paths.
    pub scatterer: Point3,
}

impl PathTruth {
    pub fn arrival(&self) -> Point3 {
        arrival_unit(self.aoa, self.elevation.map(|e| e.aoa))
    }

    pub fn departure(&self, omega: f64, varrho: f64) -> Point3 {
        departure_unit(self.aod, omega, self.elevation.map(|e| (e.aod, varrho)))
    }

    /// Transmitter location implied by this path for a given orientation.
    pub fn origin(&self, omega: f64, varrho: f64) -> Point3 {
        origin_from_units(
            &self.arrival(),
            &self.departure(omega, varrho),
            self.length,
            self.bounce_range,
        )
    }
}

/// `nu * e - (d - nu) * g`: the HV point reached by walking back along a path.
pub fn origin_from_units(arrival: &Point3, departure: &Point3, length: f64, bounce_range: f64) -> Point3 {
    arrival * bounce_range - departure * (length - bounce_range)
}

/// Forward synthesis of a planar path from the HV at `hv` with heading `omega`.
pub fn path_from_scatterer(hv: Point2, omega: f64, scatterer: Point2) -> Result<PathTruth> {
    let to_scatterer = scatterer - hv;
    let bounce_range = scatterer.norm();
    let leg = to_scatterer.norm();
    if bounce_range < DEGENERATE_DISTANCE {
        return Err(Error::DegenerateGeometry("scatterer coincides with the SV"));
    }
    if leg < DEGENERATE_DISTANCE {
        return Err(Error::DegenerateGeometry("scatterer coincides with the HV"));
    }
    Ok(PathTruth {
        aoa: wrap_angle(scatterer.y.atan2(scatterer.x)),
        aod: wrap_angle(to_scatterer.y.atan2(to_scatterer.x) - omega),
        elevation: None,
        length: bounce_range + leg,
        bounce_range,
        scatterer: Point3::new(scatterer.x, scatterer.y, 0.0),
    })
}

/// Forward synthesis of a 3D path.
pub fn path_from_scatterer_3d(hv: &Pose3D, scatterer: Point3) -> Result<PathTruth> {
    let to_scatterer = scatterer - hv.position;
    let bounce_range = scatterer.norm();
    let leg = to_scatterer.norm();
    if bounce_range < DEGENERATE_DISTANCE {
        return Err(Error::DegenerateGeometry("scatterer coincides with the SV"));
    }
    if leg < DEGENERATE_DISTANCE {
        return Err(Error::DegenerateGeometry("scatterer coincides with the HV"));
    }
    let polar = |v: &Point3, n: f64| (v.z / n).clamp(-1.0, 1.0).acos();
    Ok(PathTruth {
        aoa: wrap_angle(scatterer.y.atan2(scatterer.x)),
        aod: wrap_angle(to_scatterer.y.atan2(to_scatterer.x) - hv.omega),
        elevation: Some(Elevation {
            aoa: polar(&scatterer, bounce_range),
            aod: polar(&to_scatterer, leg) - hv.varrho,
        }),
        length: bounce_range + leg,
        bounce_range,
        scatterer,
    })
}

/// Planar HV position from one path's angles and distances.
pub fn hv_position_from_path(aoa: f64, aod: f64, omega: f64, length: f64, bounce_range: f64) -> Point2 {
    let tail = length - bounce_range;
    Point2::new(
        bounce_range * aoa.cos() - tail * (aod + omega).cos(),
        bounce_range * aoa.sin() - tail * (aod + omega).sin(),
    )
}

/// 3D HV position from one path's angles and distances.
pub fn hv_position_from_path_3d(
    aoa: f64,
    aod: f64,
    elevation: Elevation,
    omega: f64,
    varrho: f64,
    length: f64,
    bounce_range: f64,
) -> Point3 {
    origin_from_units(
        &arrival_unit(aoa, Some(elevation.aoa)),
        &departure_unit(aod, omega, Some((elevation.aod, varrho))),
        length,
        bounce_range,
    )
}

/// World-to-body rotation used for the sizing box.
///
/// First row is `(cos ω, sin ω)`, so `rotation_2d(π/2)·(1,0) = (0,-1)`.
pub fn rotation_2d(omega: f64) -> Matrix2<f64> {
    let (s, c) = omega.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Counterclockwise rotation by azimuth `omega` and pitch `varrho`.
///
/// Its columns are the body axes (heading, lateral, up) in world coordinates.
pub fn rotation_3d(omega: f64, varrho: f64) -> Matrix3<f64> {
    let (sw, cw) = omega.sin_cos();
    let (sr, cr) = varrho.sin_cos();
    Matrix3::new(
        cw,
        -sw * cr,
        sw * sr, //
        sw,
        cw * cr,
        -cw * sr, //
        0.0,
        sr,
        cr,
    )
}

/// Antenna-cluster arrangement on the HV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClusterLayout {
    Single,
    /// Four clusters on the corners of a `length x width` rectangle, length
    /// along the heading.
    Rectangle {
        length: f64,
        width: f64,
    },
}

impl ClusterLayout {
    pub fn cluster_count(&self) -> usize {
        match self {
            ClusterLayout::Single => 1,
            ClusterLayout::Rectangle { .. } => 4,
        }
    }

    pub fn dimensions(&self) -> (f64, f64) {
        match *self {
            ClusterLayout::Single => (0.0, 0.0),
            ClusterLayout::Rectangle { length, width } => (length, width),
        }
    }

    /// Body-frame offsets of every cluster from the centroid, `(along, across)`.
    pub fn body_offsets(&self) -> Vec<Point2> {
        match *self {
            ClusterLayout::Single => alloc::vec![Point2::zeros()],
            ClusterLayout::Rectangle { length, width } => (0..4)
                .map(|k| {
                    let (sl, sw) = vertex_signs(k);
                    Point2::new(sl * length / 2.0, sw * width / 2.0)
                })
                .collect(),
        }
    }

    /// World positions of every cluster for a planar centroid pose.
    pub fn positions(&self, pose: &Pose2D) -> Vec<Point2> {
        let u = pose.heading();
        let n = Point2::new(-u.y, u.x);
        self.body_offsets()
            .into_iter()
            .map(|o| pose.position + u * o.x + n * o.y)
            .collect()
    }

    /// World positions of every cluster for a 3D centroid pose.
    pub fn positions_3d(&self, pose: &Pose3D) -> Vec<Point3> {
        let r = rotation_3d(pose.omega, pose.varrho);
        self.body_offsets()
            .into_iter()
            .map(|o| pose.position + r * Point3::new(o.x, o.y, 0.0))
            .collect()
    }
}

/// Signs of the body-frame corner offsets for cluster `k` (0-based).
///
/// Cluster 0 is front-left, then front-right... walking the rectangle so that
/// cluster 1 = cluster 0 minus the length, cluster 2 = minus both and
/// cluster 3 = minus the width.
pub fn vertex_signs(k: usize) -> (f64, f64) {
    match k % 4 {
        0 => (1.0, 1.0),
        1 => (-1.0, 1.0),
        2 => (-1.0, -1.0),
        _ => (1.0, -1.0),
    }
}

/// One scatterer of a synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneScatterer {
    pub position: Point3,
    /// Restricts the scatterer to paths from one cluster; `None` reflects
    /// every cluster.
    pub cluster: Option<usize>,
}

impl SceneScatterer {
    pub fn planar(x: f64, y: f64) -> Self {
        Self {
            position: Point3::new(x, y, 0.0),
            cluster: None,
        }
    }

    pub fn for_cluster(mut self, cluster: usize) -> Self {
        self.cluster = Some(cluster);
        self
    }
}

/// Ground truth of a planar or 3D scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub hv_pose: Pose3D,
    /// When false the scene is planar: z coordinates and pitch are ignored.
    pub three_d: bool,
    pub layout: ClusterLayout,
    /// Clusters transmit separable waveform sets.
    pub decoupled: bool,
    pub scatterers: Vec<SceneScatterer>,
    /// Unknown HV-SV clock gap in seconds.
    pub clock_gap: f64,
    /// Relative HV speed along its heading, m/s.
    pub velocity: f64,
}

impl SceneTruth {
    pub fn planar(pose: Pose2D, scatterers: Vec<SceneScatterer>) -> Self {
        Self {
            hv_pose: Pose3D::new(Point3::new(pose.position.x, pose.position.y, 0.0), pose.omega, 0.0),
            three_d: false,
            layout: ClusterLayout::Single,
            decoupled: false,
            scatterers,
            clock_gap: 0.0,
            velocity: 0.0,
        }
    }

    pub fn pose_2d(&self) -> Pose2D {
        Pose2D::new(self.hv_pose.position.x, self.hv_pose.position.y, self.hv_pose.omega)
    }

    pub fn cluster_positions(&self) -> Vec<Point3> {
        if self.three_d {
            self.layout.positions_3d(&self.hv_pose)
        } else {
            self.layout
                .positions(&self.pose_2d())
                .into_iter()
                .map(|p| Point3::new(p.x, p.y, 0.0))
                .collect()
        }
    }

    /// Ground-truth paths in deterministic order (cluster, then scatterer).
    pub fn synthesize_paths(&self) -> Result<Vec<TaggedPath>> {
        let mut out = Vec::new();
        for (k, cluster_pos) in self.cluster_positions().into_iter().enumerate() {
            for (idx, s) in self.scatterers.iter().enumerate() {
                if s.cluster.is_some_and(|c| c != k) {
                    continue;
                }
                let path = if self.three_d {
                    let pose = Pose3D {
                        position: cluster_pos,
                        ..self.hv_pose
                    };
                    path_from_scatterer_3d(&pose, s.position)?
                } else {
                    path_from_scatterer(cluster_pos.xy(), self.hv_pose.omega, s.position.xy())?
                };
                out.push(TaggedPath {
                    path,
                    cluster: k,
                    source: idx,
                    slot: None,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyScene);
        }
        Ok(out)
    }
}

/// A path together with the bookkeeping needed to turn it into an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedPath {
    pub path: PathTruth,
    /// Emitting cluster index.
    pub cluster: usize,
    /// Index of the scatterer that produced the path.
    pub source: usize,
    /// Transmission index for repeated transmissions.
    pub slot: Option<usize>,
}

/// What the SV measures for one resolved path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathObservation {
    pub aoa: f64,
    pub aod: f64,
    pub elevation: Option<Elevation>,
    /// Time of arrival on the SV clock, seconds.
    pub toa: f64,
    /// Arrival-time difference to the reference path, seconds.
    pub tdoa: f64,
    pub cluster: Option<usize>,
    pub slot: Option<usize>,
}

impl PathObservation {
    pub fn arrival(&self) -> Point3 {
        arrival_unit(self.aoa, self.elevation.map(|e| e.aoa))
    }

    pub fn departure(&self, omega: f64, varrho: f64) -> Point3 {
        departure_unit(self.aod, omega, self.elevation.map(|e| (e.aod, varrho)))
    }

    pub fn is_reference(&self) -> bool {
        self.tdoa == 0.0
    }
}

/// Scene -> observations: `toa = d/c + Γ`, `tdoa` relative to the first path.
pub fn synthesize_observations(scene: &SceneTruth) -> Result<Vec<PathObservation>> {
    let paths = scene.synthesize_paths()?;
    Ok(observe_paths(&paths, scene.decoupled, scene.clock_gap, 0.0))
}

/// Turns tagged paths into observations, referencing TDoAs to the first one.
///
/// With repeated transmissions the ToA of slot `q` includes the known
/// schedule offset `q * slot_interval`; the TDoA is reported with that
/// offset removed. TDoAs come from distance differences, so they are exactly
/// independent of the clock gap.
pub fn observe_paths(
    paths: &[TaggedPath],
    decoupled: bool,
    clock_gap: f64,
    slot_interval: f64,
) -> Vec<PathObservation> {
    let Some(reference) = paths.first() else {
        return Vec::new();
    };
    let ref_length = reference.path.length;
    paths
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let schedule = t.slot.unwrap_or(0) as f64 * slot_interval;
            PathObservation {
                aoa: t.path.aoa,
                aod: t.path.aod,
                elevation: t.path.elevation,
                toa: schedule + t.path.length / SPEED_OF_LIGHT + clock_gap,
                tdoa: if i == 0 {
                    0.0
                } else {
                    (t.path.length - ref_length) / SPEED_OF_LIGHT
                },
                cluster: decoupled.then_some(t.cluster),
                slot: t.slot,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_4;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn diagonal_scatterer() {
        let p = path_from_scatterer(Point2::new(10.0, 0.0), PI, Point2::new(5.0, 5.0)).unwrap();
        let s50 = 50f64.sqrt();
        assert!(close(p.aoa, FRAC_PI_4, 1e-12));
        assert!(close(p.bounce_range, s50, 1e-12));
        assert!(close(p.aod, wrap_angle(-FRAC_PI_4), 1e-12));
        assert!(close(p.length, 2.0 * s50, 1e-12));
        let hv = hv_position_from_path(p.aoa, p.aod, PI, p.length, p.bounce_range);
        assert!((hv - Point2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn collinear_scatterer() {
        let p = path_from_scatterer(Point2::new(10.0, 0.0), 0.0, Point2::new(5.0, 0.0)).unwrap();
        assert_eq!(p.aoa, 0.0);
        assert!(close(p.aod, PI, 1e-12));
        assert!(close(p.bounce_range, 5.0, 1e-12));
        assert!(close(p.length, 10.0, 1e-12));
        let hv = hv_position_from_path(0.0, PI, 0.0, 10.0, 5.0);
        assert!((hv - Point2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn collapsed_reflection_segment() {
        let hv = hv_position_from_path(0.7, 2.0, 1.0, 12.0, 12.0);
        assert!((hv - Point2::new(12.0 * 0.7f64.cos(), 12.0 * 0.7f64.sin())).norm() < 1e-12);
    }

    #[test]
    fn degenerate_scatterers_rejected() {
        let hv = Point2::new(10.0, 0.0);
        assert!(matches!(
            path_from_scatterer(hv, 0.0, Point2::zeros()),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            path_from_scatterer(hv, 0.0, hv),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn rotations() {
        assert_eq!(rotation_2d(0.0), Matrix2::identity());
        let v = rotation_2d(PI / 2.0) * Point2::new(1.0, 0.0);
        assert!((v - Point2::new(0.0, -1.0)).norm() < 1e-15);
        let r = rotation_3d(1.1, 0.4);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-14);
        assert!(close(r.determinant(), 1.0, 1e-14));
        let planar = rotation_3d(0.8, 0.0);
        let r2 = rotation_2d(0.8);
        assert!((planar.fixed_view::<2, 2>(0, 0).transpose() - r2).norm() < 1e-15);
    }

    #[test]
    fn clock_gap_leaves_tdoa_untouched() {
        let mut scene = SceneTruth::planar(
            Pose2D::new(40.0, 3.0, 2.5),
            alloc::vec![
                SceneScatterer::planar(10.0, 12.0),
                SceneScatterer::planar(25.0, -9.0),
                SceneScatterer::planar(60.0, 14.0),
                SceneScatterer::planar(-5.0, 8.0),
            ],
        );
        let base = synthesize_observations(&scene).unwrap();
        scene.clock_gap = 0.5;
        let shifted = synthesize_observations(&scene).unwrap();
        assert_eq!(base[0].tdoa, 0.0);
        for (a, b) in base.iter().zip(&shifted) {
            assert_eq!(a.tdoa, b.tdoa);
            assert!(close(b.toa - a.toa, 0.5, 1e-12));
        }
        let paths = scene.synthesize_paths().unwrap();
        for (t, o) in paths.iter().zip(&base) {
            let dd = t.path.length - paths[0].path.length;
            assert!(close(dd, SPEED_OF_LIGHT * o.tdoa, 1e-9));
        }
    }

    #[test]
    fn rectangle_vertices_follow_offsets() {
        let layout = ClusterLayout::Rectangle {
            length: 4.0,
            width: 2.0,
        };
        let pose = Pose2D::new(30.0, 5.0, 0.3);
        let v = layout.positions(&pose);
        let u = pose.heading();
        let n = Point2::new(-u.y, u.x);
        assert!((v[1] - (v[0] - u * 4.0)).norm() < 1e-12);
        assert!((v[2] - (v[0] - u * 4.0 - n * 2.0)).norm() < 1e-12);
        assert!((v[3] - (v[0] - n * 2.0)).norm() < 1e-12);
        let c: Point2 = v.iter().sum::<Point2>() / 4.0;
        assert!((c - pose.position).norm() < 1e-12);
    }

    #[test]
    fn planar_3d_path_matches_2d() {
        let pose = Pose3D::new(Point3::new(30.0, -4.0, 0.0), 2.0, 0.0);
        let s = Point3::new(12.0, 9.0, 0.0);
        let p3 = path_from_scatterer_3d(&pose, s).unwrap();
        let p2 = path_from_scatterer(Point2::new(30.0, -4.0), 2.0, s.xy()).unwrap();
        let el = p3.elevation.unwrap();
        assert!(close(el.aoa, PI / 2.0, 1e-12) && close(el.aod, PI / 2.0, 1e-12));
        assert!(close(p3.aod, p2.aod, 1e-12) && close(p3.length, p2.length, 1e-12));
        let hv = hv_position_from_path_3d(p3.aoa, p3.aod, el, 2.0, 0.0, p3.length, p3.bounce_range);
        assert!((hv - pose.position).norm() < 1e-12);
    }
}
