//! Enclosing disk / box solvers against brute-force grids.

use hvsense_core::geometry::{
    synthesize_observations, ClusterLayout, PathObservation, Point2, Point3, Pose2D, SceneScatterer, SceneTruth,
    SPEED_OF_LIGHT,
};
use hvsense_core::size::{feasible_d1_interval, min_box, min_disk};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coupled_scene(rng: &mut ChaCha8Rng, paths: usize) -> (SceneTruth, Vec<PathObservation>) {
    loop {
        let hv = Pose2D::new(
            rng.random_range(20.0..60.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let scatterers = (0..paths)
            .map(|i| {
                SceneScatterer::planar(rng.random_range(-15.0..80.0), rng.random_range(-25.0..25.0)).for_cluster(i % 4)
            })
            .collect();
        let mut scene = SceneTruth::planar(hv, scatterers);
        scene.layout = ClusterLayout::Rectangle {
            length: 3.0,
            width: 6.0,
        };
        if let Ok(obs) = synthesize_observations(&scene) {
            return (scene, obs);
        }
    }
}

/// Per path: arrival unit, departure unit, cρ.
fn rays(obs: &[PathObservation], omega: f64) -> Vec<(Point2, Point2, f64)> {
    obs.iter()
        .map(|o| {
            let e = Point2::new(o.aoa.cos(), o.aoa.sin());
            let g = Point2::new((o.aod + omega).cos(), (o.aod + omega).sin());
            (e, g, SPEED_OF_LIGHT * o.tdoa)
        })
        .collect()
}

/// Smallest distance from `p0` to the origins path `p` can produce at `d1`.
fn segment_distance(e: Point2, g: Point2, total: f64, p0: Point2) -> f64 {
    if total < 0.0 {
        return f64::INFINITY;
    }
    // origin(ν) = ν (e + g) − total g, ν ∈ [0, total]
    let a = e + g;
    let base = -g * total;
    let t = if a.norm_squared() > 0.0 {
        (a.dot(&(p0 - base)) / a.norm_squared()).clamp(0.0, total)
    } else {
        0.0
    };
    (base + a * t - p0).norm()
}

fn disk_radius_at(rays: &[(Point2, Point2, f64)], d1: f64, p0: Point2) -> f64 {
    rays.iter()
        .map(|&(e, g, off)| segment_distance(e, g, d1 + off, p0))
        .fold(0.0, f64::max)
}

fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (lo, hi);
    let mut best = (lo, f(lo));
    for _ in 0..6 {
        let n = 2000;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        let w = (hi - lo) / 100.0;
        lo = best.0 - w;
        hi = best.0 + w;
    }
    best
}

#[test]
fn disk_radius_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let np = rng.random_range(4..8);
        let (scene, obs) = coupled_scene(&mut rng, np);
        let p0 = scene.pose_2d().position;
        let omega = scene.hv_pose.omega;
        let d = min_disk(&obs, p0, omega).unwrap();
        let r = rays(&obs, omega);
        let lo = r.iter().map(|x| -x.2).fold(f64::NEG_INFINITY, f64::max);
        let (_, r_grid) = grid_min(|d1| disk_radius_at(&r, d1, p0), lo, lo + 300.0);
        assert!(
            (d.radius - r_grid).abs() < 1e-3,
            "bisection {} grid {}",
            d.radius,
            r_grid
        );
        assert!(d.boundary_paths.len() >= 2, "{d:?}");
    }
}

/// Least width needed by one path given `d1` and a length budget.
fn path_width(e: Point2, g: Point2, total: f64, p0: Point2, omega: f64, length: f64) -> f64 {
    if total < 0.0 {
        return f64::INFINITY;
    }
    let (u, n) = (
        Point2::new(omega.cos(), omega.sin()),
        Point2::new(-omega.sin(), omega.cos()),
    );
    let a = e + g;
    let base = -g * total - p0;
    // body coordinates are affine in ν: (αu ν + βu, αn ν + βn)
    let (au, bu) = (u.dot(&a), u.dot(&base));
    let (an, bn) = (n.dot(&a), n.dot(&base));
    let (mut lo, mut hi) = (0.0, total);
    let half = length / 2.0;
    if au.abs() < 1e-15 {
        if bu.abs() > half {
            return f64::INFINITY;
        }
    } else {
        let (t0, t1) = ((-half - bu) / au, (half - bu) / au);
        lo = f64::max(lo, t0.min(t1));
        hi = f64::min(hi, t0.max(t1));
    }
    if lo > hi {
        return f64::INFINITY;
    }
    let (v0, v1) = (an * lo + bn, an * hi + bn);
    if v0.signum() != v1.signum() {
        0.0
    } else {
        2.0 * v0.abs().min(v1.abs())
    }
}

#[test]
fn box_objective_matches_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..6 {
        let np = rng.random_range(4..7);
        let (scene, obs) = coupled_scene(&mut rng, np);
        let p0 = scene.pose_2d().position;
        let omega = scene.hv_pose.omega;
        let b = min_box(&obs, p0, omega).unwrap();
        let qp_obj = b.length().powi(2) + b.width().powi(2);
        let r = rays(&obs, omega);
        // outer: length; inner: reference length
        let best_for_length = |l: f64| {
            grid_min(
                |d1| {
                    let w = r
                        .iter()
                        .map(|&(e, g, off)| path_width(e, g, d1 + off, p0, omega, l))
                        .fold(0.0, f64::max);
                    l * l + w * w
                },
                b.reference_length - 20.0,
                b.reference_length + 20.0,
            )
            .1
        };
        let mut grid = f64::INFINITY;
        let mut lo = 0.0;
        let mut hi = 12.0;
        for _ in 0..4 {
            let n = 200;
            let mut arg = lo;
            for i in 0..=n {
                let l = lo + (hi - lo) * i as f64 / n as f64;
                let v = best_for_length(l);
                if v < grid {
                    grid = v;
                    arg = l;
                }
            }
            let w = (hi - lo) / 50.0;
            lo = f64::max(0.0, arg - w);
            hi = arg + w;
        }
        assert!(qp_obj <= grid + 1e-6, "qp {qp_obj} grid {grid}");
        assert!(grid - qp_obj < 1e-3, "qp {qp_obj} grid {grid}");
        // and the QP point itself is feasible
        for body in &b.body {
            assert!(body.x.abs() <= b.length() / 2.0 + 1e-7 && body.y.abs() <= b.width() / 2.0 + 1e-7);
        }
        for ((nu, o), ray) in b.bounce_ranges.iter().zip(&obs).zip(&r) {
            assert!(*nu > 0.0 && *nu < b.reference_length + ray.2, "{o:?}");
        }
    }
}

#[test]
fn true_rectangle_is_feasible_for_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let (scene, obs) = coupled_scene(&mut rng, 6);
        let b = min_box(&obs, scene.pose_2d().position, scene.hv_pose.omega).unwrap();
        assert!(b.length().powi(2) + b.width().powi(2) <= 45.0 + 1e-6, "{:?}", b.sizes);
    }
}

fn unit_scene() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 4usize..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn feasible_sets_grow_with_radius((seed, np) in unit_scene(), r1 in 0.0f64..8.0, dr in 0.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scene, obs) = coupled_scene(&mut rng, np);
        let p0 = scene.pose_2d().position;
        for o in &obs {
            let small = feasible_d1_interval(o, scene.hv_pose.omega, r1, p0);
            let large = feasible_d1_interval(o, scene.hv_pose.omega, r1 + dr, p0);
            if let Some(s) = small {
                let l = large.expect("larger radius lost feasibility");
                prop_assert!(l.lo <= s.lo + 1e-9 && s.hi <= l.hi + 1e-9, "{s:?} ⊄ {l:?}");
            }
        }
    }

    #[test]
    fn disk_radius_ignores_path_order((seed, np) in unit_scene(), shift in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scene, obs) = coupled_scene(&mut rng, np);
        let p0 = scene.pose_2d().position;
        let mut rotated = obs.clone();
        rotated.rotate_left(shift % np);
        let a = min_disk(&obs, p0, scene.hv_pose.omega).unwrap();
        let b = min_disk(&rotated, p0, scene.hv_pose.omega).unwrap();
        prop_assert!((a.radius - b.radius).abs() < 1e-7, "{} vs {}", a.radius, b.radius);
    }

    #[test]
    fn disk_witness_is_feasible((seed, np) in unit_scene()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scene, obs) = coupled_scene(&mut rng, np);
        let p0 = scene.pose_2d().position;
        let d = min_disk(&obs, p0, scene.hv_pose.omega).unwrap();
        let p0 = Point3::new(p0.x, p0.y, 0.0);
        for (o, nu) in d.origins.iter().zip(&d.bounce_ranges) {
            prop_assert!((o - p0).norm() <= d.radius + 1e-9);
            prop_assert!(*nu > 0.0);
        }
        // the true rectangle is one admissible configuration
        prop_assert!(d.radius <= 45f64.sqrt() / 2.0 + 1e-6);
    }
}
