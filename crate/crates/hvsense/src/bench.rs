//! Monte Carlo trials and sweeps.
//!
//! A trial draws one channel realization, turns the observable paths into
//! observations (parametric noise surrogate or the waveform-level front
//! end), runs one solver and scores it against the ground truth. Sweeps run
//! every (point, trial) pair on the rayon pool; each pair's seed is derived
//! from the master seed and its indices, so results do not depend on
//! scheduling and rows come back in submission order.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use clap::ValueEnum;
use hvsense_core::augment::{self, CombiningConfig};
use hvsense_core::channel::{self, ClusterMode, Realization, ScenarioConfig};
use hvsense_core::frontend::{self, FrontendConfig};
use hvsense_core::geometry::{rotation_3d, vertex_signs, Point3, Pose3D};
use hvsense_core::size::{self, SizeEstimate};
use hvsense_core::{multicluster, single, Error, SensingEstimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::config_hash;
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Single2d,
    Single3d,
    Decoupled,
    Disk,
    Box,
    Sphere,
    Cuboid,
    Combine,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Single2d => "single2d",
            Solver::Single3d => "single3d",
            Solver::Decoupled => "decoupled",
            Solver::Disk => "disk",
            Solver::Box => "box",
            Solver::Sphere => "sphere",
            Solver::Cuboid => "cuboid",
            Solver::Combine => "combine",
        }
    }

    /// Antenna arrangement and dimensionality the solver is built for; the
    /// trial config is adjusted to match.
    pub fn prepare(self, cfg: &mut ScenarioConfig) {
        let (clusters, three_d) = match self {
            Solver::Single2d | Solver::Combine => (ClusterMode::Single, false),
            Solver::Single3d => (ClusterMode::Single, true),
            Solver::Decoupled => (ClusterMode::Decoupled, false),
            Solver::Disk | Solver::Box => (ClusterMode::Coupled, false),
            Solver::Sphere | Solver::Cuboid => (ClusterMode::Coupled, true),
        };
        cfg.clusters = clusters;
        cfg.three_d = three_d;
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Frontend {
    /// Exact geometry plus the Gaussian noise surrogate.
    #[default]
    Parametric,
    /// Waveform synthesis, matched filter and MUSIC.
    Signal,
}

impl fmt::Display for Frontend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frontend::Parametric => "parametric",
            Frontend::Signal => "signal",
        })
    }
}

/// Everything about a trial that is not part of the scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOptions {
    pub solver: Solver,
    pub frontend: Frontend,
    /// Transmissions pooled by the combining solver (`Q`).
    pub slots: usize,
    /// Random directional beam per transmission (width `2π/Q`).
    pub beam: bool,
    /// Seconds between pooled transmissions.
    pub interval: f64,
    /// Use exactly this many paths (the strongest ones); trials with fewer
    /// observable paths fail.
    pub exact_paths: Option<usize>,
    /// Signal-chain settings; antenna counts and bandwidth come from the
    /// scenario.
    pub signal: FrontendConfig,
}

impl TrialOptions {
    pub fn new(solver: Solver) -> Self {
        Self {
            solver,
            frontend: Frontend::Parametric,
            slots: 1,
            beam: false,
            interval: augment::DEFAULT_INTERVAL,
            exact_paths: None,
            signal: FrontendConfig::default(),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub sweep_var: String,
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub scenario: String,
    pub solver: String,
    pub frontend: String,
    /// Observations handed to the solver.
    pub paths: usize,
    pub success: bool,
    pub failure: Option<String>,
    /// Mean squared distance of the estimated cluster positions (the
    /// centroid for single-cluster, disk and sphere solvers), m².
    pub positioning_error: Option<f64>,
    /// |estimated − true| footprint area, m².
    pub sizing_error: Option<f64>,
    /// Estimated − true footprint area, m².
    pub area_error: Option<f64>,
    pub overestimated: Option<bool>,
    /// |estimated − true| relative speed, m/s.
    pub velocity_error: Option<f64>,
    pub wall_time: f64,
    pub config_hash: String,
    pub version: String,
}

impl TrialRecord {
    /// Same record apart from the wall-clock time.
    pub fn same_outcome(&self, other: &TrialRecord) -> bool {
        TrialRecord {
            wall_time: 0.0,
            ..self.clone()
        } == TrialRecord {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

struct Scored {
    positioning_error: f64,
    size: Option<SizeEstimate>,
    velocity: Option<f64>,
}

fn mean_squared(est: &[Point3], truth: &[Point3]) -> f64 {
    est.iter().zip(truth).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / est.len() as f64
}

fn flat(p: hvsense_core::Point2) -> Point3 {
    Point3::new(p.x, p.y, 0.0)
}

fn truth_clusters(cfg: &ScenarioConfig, real: &Realization) -> Vec<Point3> {
    if cfg.three_d {
        cfg.layout().positions_3d(&real.truth.hv_pose)
    } else {
        real.cluster_positions.iter().map(|p| flat(*p)).collect()
    }
}

fn centroid_error(est: &SensingEstimate, real: &Realization, three_d: bool) -> f64 {
    let truth = real.truth.hv_pose.position;
    if three_d {
        (est.position - truth).norm_squared()
    } else {
        (est.position_2d() - truth.xy()).norm_squared()
    }
}

fn solve(
    cfg: &ScenarioConfig,
    opts: &TrialOptions,
    real: &Realization,
    obs: &[hvsense_core::PathObservation],
) -> Result<Scored, Error> {
    let truth = truth_clusters(cfg, real);
    let centroid_only = |est: &SensingEstimate, size| Scored {
        positioning_error: centroid_error(est, real, cfg.three_d),
        size,
        velocity: None,
    };
    Ok(match opts.solver {
        Solver::Single2d => centroid_only(&single::estimate_2d(obs)?, None),
        Solver::Single3d => centroid_only(&single::estimate_3d(obs)?, None),
        Solver::Decoupled => {
            let est = multicluster::estimate_decoupled(obs)?;
            let v = est.vertices.expect("rectangle estimate has vertices");
            let (length, width) = est.size.expect("rectangle estimate has a size");
            Scored {
                positioning_error: mean_squared(&v.map(flat), &truth),
                size: Some(SizeEstimate::Box { length, width }),
                velocity: None,
            }
        }
        Solver::Box => {
            let (est, b) = size::estimate_coupled_box(obs)?;
            let v = est.vertices.expect("box estimate has vertices");
            Scored {
                positioning_error: mean_squared(&v.map(flat), &truth),
                size: Some(SizeEstimate::Box {
                    length: b.length(),
                    width: b.width(),
                }),
                velocity: None,
            }
        }
        Solver::Disk => {
            let (est, d) = size::estimate_coupled_disk(obs)?;
            centroid_only(&est, Some(SizeEstimate::Disk { radius: d.radius }))
        }
        Solver::Sphere => {
            let est = single::estimate_3d(obs)?;
            let d = size::min_sphere(obs, est.position, est.omega, est.varrho.unwrap_or(0.0))?;
            centroid_only(&est, Some(SizeEstimate::Disk { radius: d.radius }))
        }
        Solver::Cuboid => {
            let est = single::estimate_3d(obs)?;
            let pose = Pose3D::new(est.position, est.omega, est.varrho.unwrap_or(0.0));
            let b = size::min_cuboid(obs, pose.position, pose.omega, pose.varrho)?;
            let axes = rotation_3d(pose.omega, pose.varrho);
            let (l, w) = (b.length(), b.width());
            let v: Vec<Point3> = (0..4)
                .map(|k| {
                    let (sl, sw) = vertex_signs(k);
                    pose.position + axes * Point3::new(sl * l / 2.0, sw * w / 2.0, 0.0)
                })
                .collect();
            Scored {
                positioning_error: mean_squared(&v, &truth),
                // footprint only: the clusters share one plane
                size: Some(SizeEstimate::Box { length: l, width: w }),
                velocity: None,
            }
        }
        Solver::Combine => {
            let combining = CombiningConfig {
                slots: opts.slots,
                interval: opts.interval,
                known_velocity: None,
            };
            let est = augment::combine_and_estimate(obs, &combining)?;
            let velocity = est.velocity;
            Scored {
                velocity,
                ..centroid_only(&est, None)
            }
        }
    })
}

/// Config as the trial actually runs it.
pub fn effective_config(cfg: &ScenarioConfig, opts: &TrialOptions) -> ScenarioConfig {
    let mut cfg = cfg.clone();
    opts.solver.prepare(&mut cfg);
    if let Some(p) = opts.exact_paths {
        cfg.max_paths = Some(p);
    }
    cfg
}

fn check(cfg: &ScenarioConfig, opts: &TrialOptions) -> Result<(), BenchError> {
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    if opts.slots == 0 {
        return Err(BenchError::Config("Q must be at least 1".into()));
    }
    if opts.exact_paths == Some(0) {
        return Err(BenchError::Config("path count must be at least 1".into()));
    }
    if opts.frontend == Frontend::Signal {
        if cfg.three_d {
            return Err(BenchError::Config("the signal front end is planar only".into()));
        }
        if cfg.clusters == ClusterMode::Decoupled {
            return Err(BenchError::Config(
                "the signal front end models one waveform set; decoupled clusters need the parametric front end".into(),
            ));
        }
        if opts.solver == Solver::Combine {
            return Err(BenchError::Config(
                "the signal front end does not tag transmissions".into(),
            ));
        }
    }
    Ok(())
}

/// Runs one trial. Estimation failures are recorded in the row; only
/// configuration problems are errors.
pub fn run_trial(
    cfg: &ScenarioConfig,
    opts: &TrialOptions,
    trial: usize,
    seed: u64,
) -> Result<TrialRecord, BenchError> {
    let cfg = effective_config(cfg, opts);
    check(&cfg, opts)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = if opts.solver == Solver::Combine {
        let combining = CombiningConfig {
            slots: opts.slots,
            interval: opts.interval,
            known_velocity: None,
        };
        augment::realize_combined(&cfg, &combining, opts.beam, &mut rng)
    } else {
        channel::realize(&cfg, &mut rng)
    }
    .map_err(|e| BenchError::Config(e.to_string()))?;

    let observed = match opts.frontend {
        Frontend::Parametric => Ok(real.observations.clone()),
        Frontend::Signal => {
            let fcfg = FrontendConfig {
                tx_antennas: cfg.tx_antennas,
                rx_antennas: cfg.rx_antennas,
                bandwidth: cfg.bandwidth,
                ..opts.signal
            };
            let noise = if cfg.noiseless {
                0.0
            } else {
                10f64.powf(cfg.noise_power / 10.0)
            };
            let paths = frontend::signal_paths(&real.budgets, real.truth.clock_gap, &mut rng);
            if paths.is_empty() {
                Ok(Vec::new())
            } else {
                frontend::estimate_paths(&paths, &fcfg, noise, &mut rng).map(|o| o.observations)
            }
        }
    };

    let mut record = TrialRecord {
        point: 0,
        sweep_var: String::new(),
        sweep_value: None,
        trial,
        seed,
        scenario: format!("{:?}", cfg.scenario).to_lowercase(),
        solver: opts.solver.name().into(),
        frontend: opts.frontend.to_string(),
        paths: 0,
        success: false,
        failure: None,
        positioning_error: None,
        sizing_error: None,
        area_error: None,
        overestimated: None,
        velocity_error: None,
        wall_time: 0.0,
        config_hash: config_hash(&cfg),
        version: hvsense_core::VERSION.into(),
    };
    let outcome = observed.and_then(|obs| {
        record.paths = obs.len();
        if let Some(p) = opts.exact_paths {
            if obs.len() < p {
                return Err(Error::Infeasible {
                    required: p,
                    available: obs.len(),
                });
            }
        }
        solve(&cfg, opts, &real, &obs)
    });
    match outcome {
        Ok(s) => {
            record.success = true;
            record.positioning_error = Some(s.positioning_error);
            if let Some(size_est) = s.size {
                let e = size::sizing_error(&size_est, cfg.vehicle_length, cfg.vehicle_width);
                record.sizing_error = Some(e.area_error.abs());
                record.area_error = Some(e.area_error);
                record.overestimated = Some(e.overestimated);
            }
            record.velocity_error = s.velocity.map(|v| (v - cfg.relative_velocity).abs());
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    record.wall_time = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Scenario knob varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Exact number of paths used.
    Paths,
    /// SV-HV distance, m.
    Distance,
    /// dBm.
    TxPower,
    MultibounceFraction,
    /// Number of pooled transmissions.
    Q,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Paths => "paths",
            SweepVar::Distance => "distance",
            SweepVar::TxPower => "tx_power",
            SweepVar::MultibounceFraction => "multibounce_fraction",
            SweepVar::Q => "Q",
        }
    }

    /// Config and options at one sweep value.
    pub fn apply(
        self,
        cfg: &ScenarioConfig,
        opts: &TrialOptions,
        value: f64,
    ) -> Result<(ScenarioConfig, TrialOptions), BenchError> {
        let (mut cfg, mut opts) = (cfg.clone(), opts.clone());
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(BenchError::Sweep(format!(
                    "{} needs positive integers, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepVar::Paths => opts.exact_paths = Some(count(value)?),
            SweepVar::Distance => cfg.inter_vehicle_distance = value,
            SweepVar::TxPower => cfg.tx_power = value,
            SweepVar::MultibounceFraction => cfg.multibounce_fraction = value,
            SweepVar::Q => opts.slots = count(value)?,
        }
        Ok((cfg, opts))
    }
}

impl FromStr for SweepVar {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "paths" | "P" => SweepVar::Paths,
            "distance" => SweepVar::Distance,
            "tx_power" => SweepVar::TxPower,
            "multibounce_fraction" => SweepVar::MultibounceFraction,
            "Q" | "q" => SweepVar::Q,
            other => return Err(BenchError::Sweep(format!("unknown sweep variable `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// `None` runs the base config once.
    pub var: Option<SweepVar>,
    pub values: Vec<f64>,
    pub trials: usize,
}

impl SweepSpec {
    pub fn single(trials: usize) -> Self {
        Self {
            var: None,
            values: Vec::new(),
            trials,
        }
    }

    /// `var=v1,v2,...`.
    pub fn parse(text: &str, trials: usize) -> Result<Self, BenchError> {
        let (var, list) = text
            .split_once('=')
            .ok_or_else(|| BenchError::Sweep(format!("expected var=v1,v2,..., got `{text}`")))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| BenchError::Sweep(format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spec = Self {
            var: Some(var.trim().parse()?),
            values,
            trials,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Sweep("at least one trial per point".into()));
        }
        if self.var.is_some() && self.values.is_empty() {
            return Err(BenchError::Sweep("at least one sweep value".into()));
        }
        Ok(())
    }

    fn points(&self) -> Vec<Option<f64>> {
        match self.var {
            None => vec![None],
            Some(_) => self.values.iter().copied().map(Some).collect(),
        }
    }
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((point as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Aggregates of one sweep point; recomputable from the rows alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub sweep_var: String,
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful trials only.
    pub mean_positioning_error: Option<f64>,
    pub std_positioning_error: Option<f64>,
    pub mean_sizing_error: Option<f64>,
    pub std_sizing_error: Option<f64>,
    pub overestimation_rate: Option<f64>,
    pub mean_paths: f64,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), std)
}

/// Groups rows by point (in order of first appearance) and aggregates.
pub fn summarize(rows: &[TrialRecord]) -> Vec<PointSummary> {
    let mut points: Vec<usize> = Vec::new();
    for r in rows {
        if !points.contains(&r.point) {
            points.push(r.point);
        }
    }
    points
        .into_iter()
        .map(|p| {
            let group: Vec<&TrialRecord> = rows.iter().filter(|r| r.point == p).collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| r.success).collect();
            let pos: Vec<f64> = ok.iter().filter_map(|r| r.positioning_error).collect();
            let siz: Vec<f64> = ok.iter().filter_map(|r| r.sizing_error).collect();
            let over: Vec<bool> = ok.iter().filter_map(|r| r.overestimated).collect();
            let (mp, sp) = mean_std(&pos);
            let (ms, ss) = mean_std(&siz);
            PointSummary {
                point: p,
                sweep_var: group[0].sweep_var.clone(),
                sweep_value: group[0].sweep_value,
                trials: group.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / group.len() as f64,
                mean_positioning_error: mp,
                std_positioning_error: sp,
                mean_sizing_error: ms,
                std_sizing_error: ss,
                overestimation_rate: (!over.is_empty())
                    .then(|| over.iter().filter(|&&o| o).count() as f64 / over.len() as f64),
                mean_paths: group.iter().map(|r| r.paths as f64).sum::<f64>() / group.len() as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<TrialRecord>,
    pub summary: Vec<PointSummary>,
}

impl SweepOutput {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.success)
    }
}

/// Runs every point of the sweep in parallel.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    opts: &TrialOptions,
    spec: &SweepSpec,
    master_seed: u64,
) -> Result<SweepOutput, BenchError> {
    spec.validate()?;
    let var_name = spec.var.map(SweepVar::name).unwrap_or("");
    let mut settings = Vec::new();
    for value in spec.points() {
        let (c, o) = match (spec.var, value) {
            (Some(var), Some(v)) => var.apply(cfg, opts, v)?,
            _ => (cfg.clone(), opts.clone()),
        };
        // surface config errors before spending time on trials
        check(&effective_config(&c, &o), &o)?;
        settings.push((value, c, o));
    }
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, t)| {
            let (value, c, o) = &settings[p];
            let mut r = run_trial(c, o, t, trial_seed(master_seed, p, t))?;
            r.point = p;
            r.sweep_var = var_name.into();
            r.sweep_value = *value;
            Ok(r)
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    let summary = summarize(&rows);
    Ok(SweepOutput { rows, summary })
}
