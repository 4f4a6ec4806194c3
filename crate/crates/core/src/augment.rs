//! Coping with too few paths.
//!
//! *Sequential combining* pools the paths of `Q` repeated transmissions sent
//! `Δ` seconds apart. Between transmissions the HV moves `v Δ` along its
//! heading; with the orientation fixed that displacement is linear in `v`, so
//! the speed becomes one more least-squares unknown and five paths in total
//! suffice (four when the speed is known).
//!
//! *Random directional beams* steer a transmit beam of width `2π/Q` to a
//! uniformly drawn direction each transmission. Paths inside the beam gain
//! 3–10 dB (narrower is stronger); the rest fall to a −20 dB back lobe.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, PathBudget, Realization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, PathObservation, Point2, Pose2D};
use crate::single::{self, best_solution, into_estimate, orientation_candidates, Extension, SensingEstimate};

/// Default spacing of repeated transmissions, seconds.
pub const DEFAULT_INTERVAL: f64 = 0.2;
/// Gain outside the main lobe, dB.
pub const BACK_LOBE_DB: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombiningConfig {
    /// Number of transmissions `Q`.
    pub slots: usize,
    /// Seconds between transmissions.
    pub interval: f64,
    /// Relative speed when known; otherwise it is estimated.
    pub known_velocity: Option<f64>,
}

impl Default for CombiningConfig {
    fn default() -> Self {
        Self {
            slots: 1,
            interval: DEFAULT_INTERVAL,
            known_velocity: None,
        }
    }
}

impl CombiningConfig {
    /// Paths needed across all transmissions.
    pub fn required_paths(&self) -> usize {
        if self.known_velocity.is_some() {
            4
        } else {
            5
        }
    }
}

/// Pose (at the first transmission) and speed from slot-tagged paths.
///
/// TDoAs are referenced to one path and must already exclude the known
/// transmission schedule (see [`crate::geometry::observe_paths`]).
pub fn combine_and_estimate(obs: &[PathObservation], cfg: &CombiningConfig) -> Result<SensingEstimate> {
    let required = cfg.required_paths();
    if obs.len() < required {
        return Err(Error::Infeasible {
            required,
            available: obs.len(),
        });
    }
    let slots: Vec<usize> = obs
        .iter()
        .enumerate()
        .map(|(i, o)| o.slot.ok_or(Error::MissingTag { index: i, what: "slot" }))
        .collect::<Result<_>>()?;
    let spread = slots.iter().any(|&q| q != slots[0]);
    // a single transmission carries no information about the speed
    let ext = if spread || cfg.known_velocity.is_some() {
        Extension::Motion {
            slots: &slots,
            interval: cfg.interval,
            velocity: cfg.known_velocity,
        }
    } else {
        Extension::Plain
    };
    let cands: Vec<(f64, Option<f64>)> = orientation_candidates(obs, single::DEFAULT_GRID_STEP, ext)?
        .into_iter()
        .map(|(w, _)| (w, None))
        .collect();
    let s = best_solution(obs, &cands, ext)?;
    let p = obs.len();
    let velocity = match ext {
        Extension::Motion { velocity: None, .. } => Some(s.sol.z[p + 1]),
        Extension::Motion { velocity: Some(v), .. } => Some(v),
        _ => None,
    };
    let mut est = into_estimate(s, obs);
    est.velocity = velocity;
    Ok(est)
}

/// Main-lobe gain for a beam of the given width, dB.
///
/// Log-linear in the width through (360°, 0 dB), (90°, 3 dB) and
/// (30°, 10 dB), extended with the end slopes.
pub fn beam_gain_db(width: f64) -> f64 {
    let pts = [(TAU, 0.0), (PI / 2.0, 3.0), (PI / 6.0, 10.0)];
    let x = width.clamp(1e-6, TAU).log10();
    let seg = if width >= pts[1].0 { 0 } else { 1 };
    let (w0, g0) = pts[seg];
    let (w1, g1) = pts[seg + 1];
    let t = (x - w0.log10()) / (w1.log10() - w0.log10());
    g0 + t * (g1 - g0)
}

/// One transmit beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Full beam width, radians in `(0, 2π]`.
    pub width: f64,
    /// Steering direction relative to the HV heading.
    pub center: f64,
}

impl BeamConfig {
    pub fn isotropic() -> Self {
        Self {
            width: TAU,
            center: 0.0,
        }
    }

    /// Width `2π/Q` with a uniformly drawn direction.
    pub fn random<R: Rng + ?Sized>(slots: usize, rng: &mut R) -> Self {
        Self {
            width: TAU / slots.max(1) as f64,
            center: rng.random_range(0.0..TAU),
        }
    }

    /// Gain seen by a path leaving at `aod` (HV body frame), dB.
    pub fn gain_db(&self, aod: f64) -> f64 {
        if self.width >= TAU {
            0.0
        } else if angle_diff(aod, self.center).abs() <= self.width / 2.0 {
            beam_gain_db(self.width)
        } else {
            BACK_LOBE_DB
        }
    }
}

/// Applies the beam gain to every budget; geometry is untouched.
pub fn apply_beam(budgets: &mut [PathBudget], beam: &BeamConfig) {
    for b in budgets {
        let g = beam.gain_db(b.tagged.path.aod);
        b.rx_power += g - b.beam_gain_db;
        b.beam_gain_db = g;
    }
}

/// HV centroid pose at transmission `q`.
pub fn pose_at(cfg: &ScenarioConfig, slot: usize, interval: f64) -> Pose2D {
    let base = cfg.hv_pose();
    let shift = base.heading() * (cfg.relative_velocity * interval * slot as f64);
    Pose2D {
        position: base.position + shift,
        omega: base.omega,
    }
}

fn slot_budgets<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    field: &[channel::FieldScatterer],
    slot: usize,
    slots: usize,
    interval: f64,
    beam: bool,
    rng: &mut R,
) -> (Vec<PathBudget>, usize) {
    let pose = pose_at(cfg, slot, interval);
    let mut budgets = channel::budget_all(cfg, field, &pose, Some(slot), rng);
    let candidates = budgets.len();
    if beam && slots > 1 {
        apply_beam(&mut budgets, &BeamConfig::random(slots, rng));
    }
    (channel::select_observable(cfg, budgets), candidates)
}

/// Simulates `Q` transmissions (optionally beamformed) and returns the
/// pooled, slot-tagged observations.
pub fn realize_combined<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    combining: &CombiningConfig,
    beam: bool,
    rng: &mut R,
) -> Result<Realization> {
    cfg.validate()?;
    let field = channel::generate_scatterers(cfg, rng);
    let clock_gap = rng.random_range(-1e-3..1e-3);
    let mut budgets = Vec::new();
    let mut candidates = 0;
    for q in 0..combining.slots.max(1) {
        let (b, c) = slot_budgets(cfg, &field, q, combining.slots, combining.interval, beam, rng);
        budgets.extend(b);
        candidates += c;
    }
    let observations = channel::observe(cfg, &budgets, clock_gap, combining.interval, rng);
    let pose = cfg.hv_pose();
    Ok(Realization {
        truth: channel::scene_truth(cfg, &field, clock_gap),
        cluster_positions: cfg.layout().positions(&pose),
        field,
        budgets,
        observations,
        candidates,
    })
}

/// Fraction of trials with enough observable paths: four in a single
/// isotropic transmission, or five in total over `slots` beamformed ones.
pub fn success_probability<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    slots: usize,
    interval: f64,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let q = slots.max(1);
    let need = if q == 1 { 4 } else { 5 };
    let mut ok = 0usize;
    for _ in 0..trials {
        let field = channel::generate_scatterers(cfg, rng);
        let total: usize = (0..q)
            .map(|s| slot_budgets(cfg, &field, s, q, interval, true, rng).0.len())
            .sum();
        if total >= need {
            ok += 1;
        }
    }
    ok as f64 / trials.max(1) as f64
}

/// Positions of every cluster at the first transmission.
pub fn truth_positions(cfg: &ScenarioConfig) -> Vec<Point2> {
    cfg.layout().positions(&cfg.hv_pose())
}
