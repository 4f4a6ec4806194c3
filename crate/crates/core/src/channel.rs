//! Geometry-based stochastic V2V channel.
//!
//! A straight road runs along the X axis with the SV at its center. Mobile
//! scatterers fall uniformly on the road strip and static scatterers on a
//! band along each side; counts are Poisson with mean density × area. Every
//! scatterer produces one single-bounce path per HV cluster. Paths get a
//! log-distance path loss (random exponent for NLoS, fixed for LoS), Rayleigh
//! fading, and are observable when their SNR clears a threshold.
//!
//! Estimation error is injected by a parametric surrogate: zero-mean Gaussian
//! noise on angles and arrival times whose standard deviation scales as
//! `10^(−(SNR − ref)/20)`.
//!
//! Density defaults (0.005 /m² mobile on the road, 0.05 /m² static on 1 m
//! roadside bands) and the 10 dB observability threshold are choices of this
//! crate, not measured values.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angle_diff, path_from_scatterer, path_from_scatterer_3d, wrap_angle, ClusterLayout, PathObservation, PathTruth,
    Point2, Point3, Pose2D, Pose3D, SceneScatterer, SceneTruth, TaggedPath,
};

/// Minimum distance between a scatterer and either vehicle.
const VEHICLE_CLEARANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Highway,
    Rural,
}

impl Scenario {
    pub fn road_width(self) -> f64 {
        match self {
            Scenario::Highway => 18.0,
            Scenario::Rural => 8.0,
        }
    }

    /// Static scatterers per m² of roadside: rural roadsides are lined with
    /// denser stationary objects, highway scatterers are mostly vehicles.
    pub fn static_density(self) -> f64 {
        match self {
            Scenario::Highway => 0.01,
            Scenario::Rural => 0.05,
        }
    }

    pub fn los_exponent(self) -> f64 {
        match self {
            Scenario::Highway => 1.8,
            Scenario::Rural => 1.6,
        }
    }
}

/// How the HV antennas are arranged and whether clusters are separable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// One antenna cluster at the vehicle centroid.
    Single,
    /// Four corner clusters sharing one waveform set (paths untagged).
    Coupled,
    /// Four corner clusters with separable waveform sets (paths tagged).
    Decoupled,
}

/// Gaussian estimation-noise surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Angle standard deviation at the reference SNR, degrees.
    pub angle_sigma_deg: f64,
    /// Arrival-time standard deviation at the reference SNR, seconds;
    /// `None` uses half a sample, `1 / (2 B)`.
    pub toa_sigma: Option<f64>,
    pub ref_snr_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            angle_sigma_deg: 0.5,
            toa_sigma: None,
            ref_snr_db: 20.0,
        }
    }
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        angle_sigma_deg: 0.0,
        toa_sigma: Some(0.0),
        ref_snr_db: 20.0,
    };

    /// `(angle σ in rad, arrival-time σ in s)` at a given SNR.
    pub fn sigmas(&self, snr_db: f64, bandwidth: f64) -> (f64, f64) {
        let scale = 10f64.powf(-(snr_db - self.ref_snr_db) / 20.0);
        let toa = self.toa_sigma.unwrap_or(0.5 / bandwidth);
        (self.angle_sigma_deg.to_radians() * scale, toa * scale)
    }
}

/// Scenario parameters. Defaults follow the usual V2V settings: 5.9 GHz,
/// 100 MHz, 20×20 antennas, 23 dBm transmit, −70 dBm noise, 3 m × 6 m
/// vehicle, 50 m separation, 200 km/h relative speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Meters.
    pub road_length: f64,
    /// Meters; `None` uses the scenario default (8 m rural, 18 m highway).
    pub road_width: Option<f64>,
    /// Width of each roadside band holding static scatterers, meters.
    pub roadside_width: f64,
    /// SV-HV distance along the road, meters.
    pub inter_vehicle_distance: f64,
    /// Mobile scatterers per m² of road.
    pub mobile_density: f64,
    /// Static scatterers per m² of roadside; `None` uses the scenario
    /// default (0.05 rural, 0.01 highway).
    pub static_density: Option<f64>,
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Hz.
    pub bandwidth: f64,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// dBm.
    pub tx_power: f64,
    /// dBm.
    pub noise_power: f64,
    /// Minimum SNR of an observable path, dB.
    pub observability_threshold: f64,
    /// m/s.
    pub relative_velocity: f64,
    /// Cluster rectangle along the heading, meters.
    pub vehicle_length: f64,
    /// Cluster rectangle across the heading, meters.
    pub vehicle_width: f64,
    pub clusters: ClusterMode,
    pub three_d: bool,
    /// Scatterer height range above the antenna plane in 3D, meters.
    pub scatterer_height: (f64, f64),
    pub los: bool,
    pub multibounce_fraction: f64,
    /// Power factor applied to multi-bounce paths.
    pub reflection_coeff: f64,
    /// Keep at most this many observable paths (strongest first).
    pub max_paths: Option<usize>,
    /// Paths closer than this in both AoA and AoD merge, degrees.
    pub merge_angle_deg: f64,
    pub noise: NoiseModel,
    /// Skip noise injection.
    pub noiseless: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Rural,
            road_length: 600.0,
            road_width: None,
            roadside_width: 1.0,
            inter_vehicle_distance: 50.0,
            mobile_density: 0.005,
            static_density: None,
            fc: 5.9e9,
            bandwidth: 100e6,
            tx_antennas: 20,
            rx_antennas: 20,
            tx_power: 23.0,
            noise_power: -70.0,
            observability_threshold: 10.0,
            relative_velocity: 200.0 / 3.6,
            vehicle_length: 3.0,
            vehicle_width: 6.0,
            clusters: ClusterMode::Single,
            three_d: false,
            scatterer_height: (0.0, 4.0),
            los: false,
            multibounce_fraction: 0.0,
            reflection_coeff: 0.1,
            max_paths: Some(12),
            merge_angle_deg: 1.0,
            noise: NoiseModel::default(),
            noiseless: false,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn road_width(&self) -> f64 {
        self.road_width.unwrap_or_else(|| self.scenario.road_width())
    }

    pub fn static_density(&self) -> f64 {
        self.static_density.unwrap_or_else(|| self.scenario.static_density())
    }

    pub fn layout(&self) -> ClusterLayout {
        match self.clusters {
            ClusterMode::Single => ClusterLayout::Single,
            _ => ClusterLayout::Rectangle {
                length: self.vehicle_length,
                width: self.vehicle_width,
            },
        }
    }

    /// HV centroid pose: `inter_vehicle_distance` ahead on the road, driving
    /// towards the SV.
    pub fn hv_pose(&self) -> Pose2D {
        Pose2D::new(self.inter_vehicle_distance, 0.0, PI)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(self.mobile_density >= 0.0 && self.static_density() >= 0.0) {
            return Err(Error::InvalidArgument("densities must be non-negative"));
        }
        if !positive(self.road_length) || self.road_length / 2.0 <= self.inter_vehicle_distance {
            return Err(Error::InvalidArgument("road must extend past the HV"));
        }
        if !positive(self.inter_vehicle_distance) || !positive(self.road_width()) || self.roadside_width < 0.0 {
            return Err(Error::InvalidArgument("distances must be positive"));
        }
        if !positive(self.fc) || !positive(self.bandwidth) {
            return Err(Error::InvalidArgument("carrier and bandwidth must be positive"));
        }
        if self.clusters != ClusterMode::Single && !(positive(self.vehicle_length) && positive(self.vehicle_width)) {
            return Err(Error::InvalidArgument("vehicle size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.multibounce_fraction) {
            return Err(Error::InvalidArgument("multibounce_fraction must lie in [0, 1]"));
        }
        if !(self.reflection_coeff > 0.0 && self.reflection_coeff <= 1.0) {
            return Err(Error::InvalidArgument("reflection_coeff must lie in (0, 1]"));
        }
        if self.scatterer_height.0 > self.scatterer_height.1 {
            return Err(Error::InvalidArgument("scatterer_height must be an ordered range"));
        }
        if self.max_paths == Some(0) || self.tx_antennas == 0 || self.rx_antennas == 0 {
            return Err(Error::InvalidArgument("counts must be positive"));
        }
        Ok(())
    }
}

/// A generated scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldScatterer {
    pub position: Point3,
    pub mobile: bool,
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// Mobile scatterers on the road strip, static ones on the roadside bands.
///
/// Scatterers within 1 m of the SV or of the HV centroid are dropped.
pub fn generate_scatterers<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<FieldScatterer> {
    let half_len = cfg.road_length / 2.0;
    let half_w = cfg.road_width() / 2.0;
    let band = cfg.roadside_width;
    let hv = cfg.hv_pose().position;
    let n_mobile = poisson(cfg.mobile_density * cfg.road_length * 2.0 * half_w, rng);
    let n_static = poisson(cfg.static_density() * cfg.road_length * 2.0 * band, rng);
    let mut out = Vec::with_capacity(n_mobile + n_static);
    let height = |rng: &mut R| {
        if cfg.three_d {
            let (lo, hi) = cfg.scatterer_height;
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        } else {
            0.0
        }
    };
    for i in 0..n_mobile + n_static {
        let mobile = i < n_mobile;
        let x = rng.random_range(-half_len..half_len);
        let y = if mobile {
            rng.random_range(-half_w..half_w)
        } else {
            let off = if band > 0.0 { rng.random_range(0.0..band) } else { 0.0 };
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            side * (half_w + off)
        };
        let z = height(rng);
        let p = Point2::new(x, y);
        if p.norm() < VEHICLE_CLEARANCE || (p - hv).norm() < VEHICLE_CLEARANCE {
            continue;
        }
        out.push(FieldScatterer {
            position: Point3::new(x, y, z),
            mobile,
        });
    }
    out
}

/// Path plus its power budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathBudget {
    pub tagged: TaggedPath,
    /// dBm.
    pub rx_power: f64,
    pub pathloss_exponent: f64,
    /// Rayleigh amplitude (unit mean power).
    pub fading_gain: f64,
    pub is_los: bool,
    pub is_multibounce: bool,
    /// Linear power factor applied for extra bounces.
    pub bounce_attenuation: f64,
    /// Transmit beam gain applied, dB.
    pub beam_gain_db: f64,
}

impl PathBudget {
    pub fn path(&self) -> &PathTruth {
        &self.tagged.path
    }

    pub fn snr(&self, cfg: &ScenarioConfig) -> f64 {
        self.rx_power - cfg.noise_power
    }

    fn recompute_power(&mut self, tx_power: f64) {
        self.rx_power = tx_power - pathloss_db(self.tagged.path.length, self.pathloss_exponent)
            + 20.0 * self.fading_gain.log10()
            + 10.0 * self.bounce_attenuation.log10()
            + self.beam_gain_db;
    }
}

/// `10 n log10(d / 1 m)`, zero below 1 m.
pub fn pathloss_db(distance: f64, exponent: f64) -> f64 {
    10.0 * exponent * distance.max(1.0).log10()
}

/// Draws the path-loss exponent and fading for one path.
pub fn budget_path<R: Rng + ?Sized>(tagged: TaggedPath, is_los: bool, cfg: &ScenarioConfig, rng: &mut R) -> PathBudget {
    let pathloss_exponent = if is_los {
        cfg.scenario.los_exponent()
    } else {
        rng.random_range(0.0..=3.5)
    };
    let power: f64 = Exp1.sample(rng);
    let mut b = PathBudget {
        tagged,
        rx_power: 0.0,
        pathloss_exponent,
        fading_gain: power.sqrt(),
        is_los,
        is_multibounce: false,
        bounce_attenuation: 1.0,
        beam_gain_db: 0.0,
    };
    b.recompute_power(cfg.tx_power);
    b
}

/// SNR at or above the configured threshold.
pub fn observable(budget: &PathBudget, cfg: &ScenarioConfig) -> bool {
    budget.snr(cfg) >= cfg.observability_threshold
}

/// Line-of-sight path modeled as a bounce off the SV-HV midpoint.
pub fn los_path(hv: Point3, omega: f64, varrho: Option<f64>) -> Result<PathTruth> {
    let mid = hv / 2.0;
    match varrho {
        None => path_from_scatterer(hv.xy(), omega, mid.xy()),
        Some(r) => path_from_scatterer_3d(
            &Pose3D {
                position: hv,
                omega,
                varrho: r,
            },
            mid,
        ),
    }
}

fn path_for(cfg: &ScenarioConfig, origin: Point3, omega: f64, scatterer: Point3) -> Result<PathTruth> {
    if cfg.three_d {
        path_from_scatterer_3d(
            &Pose3D {
                position: origin,
                omega,
                varrho: 0.0,
            },
            scatterer,
        )
    } else {
        path_from_scatterer(origin.xy(), omega, scatterer.xy())
    }
}

/// Every candidate path (all clusters × scatterers, plus LoS when enabled)
/// with power budgets, for an HV centroid at `pose`.
pub fn budget_all<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    field: &[FieldScatterer],
    pose: &Pose2D,
    slot: Option<usize>,
    rng: &mut R,
) -> Vec<PathBudget> {
    let layout = cfg.layout();
    let mut out = Vec::new();
    for (k, c) in layout.positions(pose).into_iter().enumerate() {
        let origin = Point3::new(c.x, c.y, 0.0);
        for (idx, s) in field.iter().enumerate() {
            let Ok(path) = path_for(cfg, origin, pose.omega, s.position) else {
                continue;
            };
            let tagged = TaggedPath {
                path,
                cluster: k,
                source: idx,
                slot,
            };
            out.push(budget_path(tagged, false, cfg, rng));
        }
        if cfg.los {
            if let Ok(path) = los_path(origin, pose.omega, cfg.three_d.then_some(0.0)) {
                let tagged = TaggedPath {
                    path,
                    cluster: k,
                    source: field.len(),
                    slot,
                };
                out.push(budget_path(tagged, true, cfg, rng));
            }
        }
    }
    out
}

/// Turns `round(fraction · n)` randomly chosen paths into double-bounce
/// paths: the HV now reaches the original scatterer through a second,
/// nearby one, so the departure angle and length no longer close the
/// single-bounce triangle. Their power is multiplied by `reflection_coeff`.
pub fn inject_multibounce<R: Rng + ?Sized>(
    budgets: &mut [PathBudget],
    origins: &[Point3],
    omega: f64,
    fraction: f64,
    reflection_coeff: f64,
    tx_power: f64,
    rng: &mut R,
) {
    let n = budgets.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    if count == 0 {
        return;
    }
    let chosen = rand::seq::index::sample(rng, n, count);
    for i in chosen.iter() {
        let b = &mut budgets[i];
        let origin = origins[b.tagged.cluster];
        let s1 = b.tagged.path.scatterer;
        // second bounce somewhere 2-20 m away from the first one
        let path = loop {
            let r = rng.random_range(2.0..20.0);
            let a = rng.random_range(0.0..2.0 * PI);
            let s2 = s1 + Point3::new(r * a.cos(), r * a.sin(), 0.0);
            if (s2 - origin).norm() > VEHICLE_CLEARANCE {
                let to_s2 = s2 - origin;
                let mut p = b.tagged.path;
                p.aod = wrap_angle(to_s2.y.atan2(to_s2.x) - omega);
                if let Some(el) = p.elevation.as_mut() {
                    el.aod = (to_s2.z / to_s2.norm()).clamp(-1.0, 1.0).acos();
                }
                p.length = s1.norm() + (s1 - s2).norm() + to_s2.norm();
                break p;
            }
        };
        b.tagged.path = path;
        b.is_multibounce = true;
        b.bounce_attenuation = reflection_coeff;
        b.recompute_power(tx_power);
    }
}

/// Merges paths that the receiver cannot resolve (both angles closer than
/// `merge_angle`): powers add linearly and the stronger path's geometry is
/// kept. With `separable` set only paths from the same cluster merge.
pub fn merge_unresolvable(budgets: Vec<PathBudget>, merge_angle: f64, separable: bool) -> Vec<PathBudget> {
    let mut out: Vec<PathBudget> = Vec::with_capacity(budgets.len());
    for b in budgets {
        let hit = out.iter_mut().find(|m| {
            (!separable || m.tagged.cluster == b.tagged.cluster)
                && m.tagged.slot == b.tagged.slot
                && angle_diff(m.tagged.path.aoa, b.tagged.path.aoa).abs() < merge_angle
                && angle_diff(m.tagged.path.aod, b.tagged.path.aod).abs() < merge_angle
        });
        match hit {
            None => out.push(b),
            Some(m) => {
                let total = 10f64.powf(m.rx_power / 10.0) + 10f64.powf(b.rx_power / 10.0);
                if b.rx_power > m.rx_power {
                    *m = b;
                }
                m.rx_power = 10.0 * total.log10();
            }
        }
    }
    out
}

/// Merge, observability filter, strongest-first cap, then deterministic
/// (slot, cluster, scatterer) order.
pub fn select_observable(cfg: &ScenarioConfig, budgets: Vec<PathBudget>) -> Vec<PathBudget> {
    let merged = merge_unresolvable(
        budgets,
        cfg.merge_angle_deg.to_radians(),
        cfg.clusters == ClusterMode::Decoupled,
    );
    let mut kept: Vec<PathBudget> = merged.into_iter().filter(|b| observable(b, cfg)).collect();
    if let Some(cap) = cfg.max_paths {
        kept.sort_by(|a, b| b.rx_power.total_cmp(&a.rx_power));
        kept.truncate(cap);
    }
    kept.sort_by_key(|b| (b.tagged.slot, b.tagged.cluster, b.tagged.source));
    kept
}

/// Adds estimation noise to one observation. The arrival time and the TDoA
/// move together, i.e. the reference path is treated as noiseless; use
/// [`perturb_all`] for sets.
pub fn perturb<R: Rng + ?Sized>(
    obs: &PathObservation,
    snr_db: f64,
    nm: &NoiseModel,
    bandwidth: f64,
    rng: &mut R,
) -> PathObservation {
    let (sa, st) = nm.sigmas(snr_db, bandwidth);
    let mut n = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let mut o = *obs;
    o.aoa = wrap_angle(o.aoa + n(sa));
    o.aod = wrap_angle(o.aod + n(sa));
    if let Some(el) = o.elevation.as_mut() {
        el.aoa = (el.aoa + n(sa)).clamp(0.0, PI);
        el.aod += n(sa);
    }
    let dt = n(st);
    o.toa += dt;
    if o.tdoa != 0.0 {
        o.tdoa += dt;
    }
    o
}

/// Perturbs a set and re-references the TDoAs to the perturbed reference
/// arrival time, so the reference keeps `tdoa == 0`.
pub fn perturb_all<R: Rng + ?Sized>(
    obs: &mut [PathObservation],
    snrs: &[f64],
    nm: &NoiseModel,
    bandwidth: f64,
    rng: &mut R,
) {
    let Some(r) = obs.iter().position(|o| o.tdoa == 0.0) else {
        return;
    };
    let before: Vec<(f64, f64)> = obs.iter().map(|o| (o.toa, o.tdoa)).collect();
    for (o, &snr) in obs.iter_mut().zip(snrs) {
        *o = perturb(o, snr, nm, bandwidth, rng);
    }
    let ref_shift = obs[r].toa - before[r].0;
    for (i, o) in obs.iter_mut().enumerate() {
        if i != r {
            let (toa, tdoa) = before[i];
            o.tdoa = tdoa + (o.toa - toa) - ref_shift;
        }
    }
}

/// One simulated transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub truth: SceneTruth,
    pub cluster_positions: Vec<Point2>,
    pub field: Vec<FieldScatterer>,
    /// Observed paths, aligned with `observations`.
    pub budgets: Vec<PathBudget>,
    pub observations: Vec<PathObservation>,
    /// Candidate paths before merging and the observability filter.
    pub candidates: usize,
}

impl Realization {
    pub fn snrs(&self, cfg: &ScenarioConfig) -> Vec<f64> {
        self.budgets.iter().map(|b| b.snr(cfg)).collect()
    }
}

/// Ground truth for a configuration and a generated field.
pub fn scene_truth(cfg: &ScenarioConfig, field: &[FieldScatterer], clock_gap: f64) -> SceneTruth {
    let pose = cfg.hv_pose();
    SceneTruth {
        hv_pose: Pose3D::new(Point3::new(pose.position.x, pose.position.y, 0.0), pose.omega, 0.0),
        three_d: cfg.three_d,
        layout: cfg.layout(),
        decoupled: cfg.clusters == ClusterMode::Decoupled,
        scatterers: field
            .iter()
            .map(|s| SceneScatterer {
                position: s.position,
                cluster: None,
            })
            .collect(),
        clock_gap,
        velocity: cfg.relative_velocity,
    }
}

/// Draws a field, budgets every path, and returns the noisy observations of
/// the observable ones.
pub fn realize<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Realization> {
    cfg.validate()?;
    let field = generate_scatterers(cfg, rng);
    let pose = cfg.hv_pose();
    let clock_gap = rng.random_range(-1e-3..1e-3);
    let mut budgets = budget_all(cfg, &field, &pose, None, rng);
    let candidates = budgets.len();
    let positions = cfg.layout().positions(&pose);
    if cfg.multibounce_fraction > 0.0 {
        let origins: Vec<Point3> = positions.iter().map(|p| Point3::new(p.x, p.y, 0.0)).collect();
        inject_multibounce(
            &mut budgets,
            &origins,
            pose.omega,
            cfg.multibounce_fraction,
            cfg.reflection_coeff,
            cfg.tx_power,
            rng,
        );
    }
    let budgets = select_observable(cfg, budgets);
    let observations = observe(cfg, &budgets, clock_gap, 0.0, rng);
    Ok(Realization {
        truth: scene_truth(cfg, &field, clock_gap),
        cluster_positions: positions,
        field,
        budgets,
        observations,
        candidates,
    })
}

/// Observations for selected budgets, with noise unless the config is
/// noiseless.
pub fn observe<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    budgets: &[PathBudget],
    clock_gap: f64,
    slot_interval: f64,
    rng: &mut R,
) -> Vec<PathObservation> {
    let tagged: Vec<TaggedPath> = budgets.iter().map(|b| b.tagged).collect();
    let mut obs = crate::geometry::observe_paths(
        &tagged,
        cfg.clusters == ClusterMode::Decoupled,
        clock_gap,
        slot_interval,
    );
    if !cfg.noiseless {
        let snrs: Vec<f64> = budgets.iter().map(|b| b.snr(cfg)).collect();
        perturb_all(&mut obs, &snrs, &cfg.noise, cfg.bandwidth, rng);
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn los_midpoint() {
        let p = los_path(Point3::new(50.0, 0.0, 0.0), PI, None).unwrap();
        assert_eq!(p.aoa, 0.0);
        assert!(p.aod.abs() < 1e-12 || (p.aod - 2.0 * PI).abs() < 1e-12);
        assert!((p.length - 50.0).abs() < 1e-12);
        assert!((p.bounce_range - 25.0).abs() < 1e-12);
    }

    #[test]
    fn observability_examples() {
        let cfg = ScenarioConfig {
            observability_threshold: 5.0,
            ..ScenarioConfig::default()
        };
        let path = path_from_scatterer(Point2::new(10.0, 0.0), PI, Point2::new(5.0, 5.0)).unwrap();
        let mut b = budget_path(
            TaggedPath {
                path,
                cluster: 0,
                source: 0,
                slot: None,
            },
            false,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        b.rx_power = -60.0;
        assert!(observable(&b, &cfg));
        b.rx_power = -70.0;
        assert!(!observable(&b, &cfg));
        // 23 dBm over 50 m with exponent 2: -11 dBm, 59 dB SNR
        assert!(23.0 - pathloss_db(50.0, 2.0) - cfg.noise_power >= cfg.observability_threshold);
        assert_eq!(pathloss_db(0.0, 3.0), 0.0);
    }

    #[test]
    fn zero_density_gives_empty_field() {
        let cfg = ScenarioConfig {
            mobile_density: 0.0,
            static_density: Some(0.0),
            ..ScenarioConfig::default()
        };
        assert!(generate_scatterers(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }

    #[test]
    fn zero_sigma_is_identity() {
        let o = PathObservation {
            aoa: 1.0,
            aod: 2.0,
            elevation: None,
            toa: 1e-6,
            tdoa: 3e-8,
            cluster: None,
            slot: None,
        };
        let p = perturb(&o, 20.0, &NoiseModel::NONE, 1e8, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(o, p);
    }
}
