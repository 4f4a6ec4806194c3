//! Solvers against scenes synthesized by the forward geometry.

use std::f64::consts::{PI, TAU};

use hvsense_core::geometry::{
    angle_diff, synthesize_observations, ClusterLayout, PathObservation, Point2, Point3, Pose2D, Pose3D,
    SceneScatterer, SceneTruth,
};
use hvsense_core::multicluster::{assemble_extended, estimate_decoupled, estimate_known_size};
use hvsense_core::single::{assemble, assemble_3d, estimate_2d, estimate_3d};
use hvsense_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scene(rng: &mut ChaCha8Rng, paths: usize) -> SceneTruth {
    let hv = Pose2D::new(
        rng.random_range(20.0..80.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(0.0..TAU),
    );
    let scatterers = (0..paths)
        .map(|_| SceneScatterer::planar(rng.random_range(-20.0..100.0), rng.random_range(-30.0..30.0)))
        .collect();
    SceneTruth::planar(hv, scatterers)
}

fn observed(scene: &SceneTruth) -> Vec<PathObservation> {
    synthesize_observations(scene).expect("scatterers clear of both vehicles")
}

#[test]
fn five_or_more_paths_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..300 {
        let np = 5 + i % 8;
        let sc = random_scene(&mut rng, np);
        let est = estimate_2d(&observed(&sc)).unwrap();
        assert!((est.position - sc.hv_pose.position).norm() < 1e-6, "scene {i}: {est:?}");
        assert!(angle_diff(est.omega, sc.hv_pose.omega).abs() < 1e-6);
        assert!(est.feasible);
        assert_eq!(est.paths_used, np);
    }
}

#[test]
fn bounce_ranges_match_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sc = random_scene(&mut rng, 7);
    let est = estimate_2d(&observed(&sc)).unwrap();
    for (nu, t) in est.bounce_ranges.iter().zip(sc.synthesize_paths().unwrap()) {
        // ν is the scatterer's distance from the SV
        assert!((nu - t.path.scatterer.norm()).abs() < 1e-6);
    }
}

#[test]
fn planar_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for p in 4..=12 {
        let sc = random_scene(&mut rng, p);
        let sys = assemble(&observed(&sc), 0.7).unwrap();
        assert_eq!(sys.matrix.shape(), (2 * (p - 1), p + 1));
    }
}

#[test]
fn thresholds_raise_infeasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obs = observed(&random_scene(&mut rng, 3));
    assert_eq!(
        estimate_2d(&obs).unwrap_err(),
        Error::Infeasible {
            required: 4,
            available: 3
        }
    );
}

fn scene_3d(rng: &mut ChaCha8Rng, paths: usize) -> SceneTruth {
    let pose = Pose3D::new(
        Point3::new(
            rng.random_range(20.0..60.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-1.0..1.0),
        ),
        rng.random_range(0.0..TAU),
        rng.random_range(-0.1..0.1),
    );
    SceneTruth {
        three_d: true,
        hv_pose: pose,
        ..SceneTruth::planar(
            Pose2D::new(0.0, 0.0, 0.0),
            (0..paths)
                .map(|_| SceneScatterer {
                    position: Point3::new(
                        rng.random_range(-10.0..80.0),
                        rng.random_range(-25.0..25.0),
                        rng.random_range(0.0..5.0),
                    ),
                    cluster: None,
                })
                .collect(),
        )
    }
}

#[test]
fn three_d_recovery_with_four_or_more_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..40 {
        let sc = scene_3d(&mut rng, 4 + i % 3);
        let obs = observed(&sc);
        let est = estimate_3d(&obs).unwrap();
        assert!((est.position - sc.hv_pose.position).norm() < 1e-5, "scene {i}: {est:?}");
        assert!(angle_diff(est.omega, sc.hv_pose.omega).abs() < 1e-6);
        let sys = assemble_3d(&obs, 0.2, 0.1).unwrap();
        assert_eq!(sys.matrix.shape(), (3 * (obs.len() - 1), obs.len() + 1));
    }
}

#[test]
fn three_d_needs_three_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let obs = observed(&scene_3d(&mut rng, 2));
    assert_eq!(
        estimate_3d(&obs).unwrap_err(),
        Error::Infeasible {
            required: 3,
            available: 2
        }
    );
}

fn decoupled_scene(rng: &mut ChaCha8Rng, per_cluster: usize) -> SceneTruth {
    let hv = Pose2D::new(
        rng.random_range(30.0..70.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(0.0..TAU),
    );
    let scatterers = (0..4 * per_cluster)
        .map(|i| {
            SceneScatterer::planar(rng.random_range(-20.0..100.0), rng.random_range(-30.0..30.0)).for_cluster(i % 4)
        })
        .collect();
    let mut sc = SceneTruth::planar(hv, scatterers);
    sc.layout = ClusterLayout::Rectangle {
        length: 3.0,
        width: 6.0,
    };
    sc.decoupled = true;
    sc
}

#[test]
fn decoupled_recovers_rectangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..40 {
        let sc = decoupled_scene(&mut rng, 2);
        let obs = observed(&sc);
        let est = estimate_decoupled(&obs).unwrap();
        assert!((est.position - sc.hv_pose.position).norm() < 1e-6, "scene {i}: {est:?}");
        let (l, w) = est.size.unwrap();
        assert!((l - 3.0).abs() < 1e-6 && (w - 6.0).abs() < 1e-6);
        let truth = sc.layout.positions(&sc.pose_2d());
        for (v, t) in est.vertices.unwrap().iter().zip(&truth) {
            assert!((v - t).norm() < 1e-6);
        }
        let sys = assemble_extended(&obs, 1.0).unwrap();
        assert_eq!(sys.matrix.shape(), (2 * (obs.len() - 1), obs.len() + 3));
    }
}

#[test]
fn decoupled_threshold_and_known_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let sc = decoupled_scene(&mut rng, 2);
    let obs = observed(&sc);
    assert_eq!(
        estimate_decoupled(&obs[..5]).unwrap_err(),
        Error::Infeasible {
            required: 6,
            available: 5
        }
    );
    let est = estimate_known_size(&obs[..5], 3.0, 6.0).unwrap();
    assert!((est.position - sc.hv_pose.position).norm() < 1e-6);
}

#[test]
fn single_cluster_is_the_zero_size_rectangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let sc = random_scene(&mut rng, 6);
    let mut obs = observed(&sc);
    for o in &mut obs {
        o.cluster = Some(0);
    }
    let a = estimate_known_size(&obs, 0.0, 0.0).unwrap();
    let b = estimate_2d(&obs).unwrap();
    assert!((a.position - b.position).norm() < 1e-9);
}

fn scene_strategy() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 5usize..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clock_gap_never_reaches_the_solver((seed, np) in scene_strategy(), gap in -0.5f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scene(&mut rng, np);
        let shifted = SceneTruth { clock_gap: gap, ..sc.clone() };
        let a = observed(&sc);
        let b = observed(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.tdoa.to_bits(), y.tdoa.to_bits());
        }
        let ea = estimate_2d(&a).unwrap();
        let eb = estimate_2d(&b).unwrap();
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn estimate_follows_a_rigid_rotation_of_the_hv_side((seed, np) in scene_strategy()) {
        // reordering the paths changes the reference, not the answer
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scene(&mut rng, np);
        let mut rotated = sc.clone();
        rotated.scatterers.rotate_left(1);
        let a = estimate_2d(&observed(&sc)).unwrap();
        let b = estimate_2d(&observed(&rotated)).unwrap();
        prop_assert!((a.position - b.position).norm() < 1e-6);
        prop_assert!(angle_diff(a.omega, b.omega).abs() < 1e-6);
    }

    #[test]
    fn dimension_law(p in 4usize..13, omega in 0.0f64..TAU, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scene(&mut rng, p);
        let obs = observed(&sc);
        prop_assert_eq!(assemble(&obs, omega).unwrap().matrix.shape(), (2 * (p - 1), p + 1));
        let tagged: Vec<PathObservation> = obs
            .iter()
            .enumerate()
            .map(|(i, o)| PathObservation { cluster: Some(i % 4), ..*o })
            .collect();
        prop_assert_eq!(assemble_extended(&tagged, omega).unwrap().matrix.shape(), (2 * (p - 1), p + 3));
    }

    #[test]
    fn heading_is_recovered_modulo_two_pi(seed in any::<u64>(), turns in -2i32..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scene(&mut rng, 6);
        let mut wound = sc.clone();
        wound.hv_pose.omega += TAU * turns as f64;
        let est = estimate_2d(&observed(&wound)).unwrap();
        prop_assert!(angle_diff(est.omega, sc.hv_pose.omega).abs() < 1e-6);
        prop_assert!((0.0..TAU).contains(&est.omega));
    }
}

#[test]
fn reference_must_exist() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut obs = observed(&random_scene(&mut rng, 5));
    obs[0].tdoa = 1e-9;
    assert_eq!(estimate_2d(&obs).unwrap_err(), Error::MissingReference);
}

#[test]
fn oppositely_headed_hv() {
    // HV on the road ahead, driving towards the SV
    let sc = SceneTruth::planar(
        Pose2D::new(50.0, 0.0, PI),
        vec![
            SceneScatterer::planar(10.0, 6.0),
            SceneScatterer::planar(60.0, -12.0),
            SceneScatterer::planar(25.0, -20.0),
            SceneScatterer::planar(85.0, -6.0),
        ],
    );
    let est = estimate_2d(&observed(&sc)).unwrap();
    assert!((est.position_2d() - Point2::new(50.0, 0.0)).norm() < 1e-6);
}
