//! Waveform-level estimation chain.
//!
//! The HV sends one orthogonal waveform per transmit antenna; the SV samples
//! its array at the signal bandwidth, matched-filters against the known
//! waveforms and looks for peaks of `‖Y[z]‖` (one per resolvable arrival
//! time). Each peak matrix `Y[z] ≈ Σ γ b(θ) a(φ)ᵀ` is then split into signal
//! and noise subspaces for a MUSIC search over arrival and departure angles.
//!
//! Waveforms are cyclically shifted CAZAC periods (see [`WaveformSet`]);
//! samples are linearly interpolated for fractional delays. The transmitted
//! samples carry unit total power, so `|γ|² / σ²` is the per-sample SNR at
//! each receive antenna (the link-budget SNR of the channel model); the
//! matched filter adds `N / M_t` of processing gain on top.
//!
//! Only planar geometry and a single waveform set are modeled.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::PathBudget;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PathObservation, SPEED_OF_LIGHT};
use crate::search;

type C64 = Complex<f64>;

/// `r e^{jθ}`.
pub fn polar(r: f64, theta: f64) -> C64 {
    let (s, c) = theta.sin_cos();
    C64::new(r * c, r * s)
}

fn modulus(c: C64) -> f64 {
    c.norm_sqr().sqrt()
}

/// MUSIC grid spacing.
pub const DEFAULT_MUSIC_STEP: f64 = 0.2 * PI / 180.0;
/// Peaks must clear the median `‖Y[z]‖` by this factor (6 dB in power).
pub const PEAK_OVER_FLOOR: f64 = 2.0;
/// ... and sit within this amplitude ratio of the strongest peak (−30 dB),
/// which keeps partial-overlap correlation of strong paths out.
pub const PEAK_DYNAMIC_RANGE: f64 = 0.031_622_776_601_683_8;
const GUARD_SAMPLES: usize = 8;

/// Antenna positions in wavelengths, in the array's own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub elements: Vec<[f64; 2]>,
}

impl ArrayGeometry {
    /// Uniform linear array along the local Y axis; broadside is angle 0.
    pub fn ula(count: usize, spacing: f64) -> Self {
        Self {
            elements: (0..count).map(|m| [0.0, m as f64 * spacing]).collect(),
        }
    }

    /// Uniform circular array with half-wavelength adjacent spacing.
    pub fn uca(count: usize) -> Self {
        let radius = if count > 1 {
            0.25 / (PI / count as f64).sin()
        } else {
            0.0
        };
        Self {
            elements: (0..count)
                .map(|m| {
                    let a = TAU * m as f64 / count as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Smallest distance between any two elements, wavelengths.
    pub fn min_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                best = best.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }

    /// Response to a plane wave along `angle`; element 0 is the phase
    /// reference.
    pub fn steering(&self, angle: f64) -> DVector<C64> {
        let (s, c) = angle.sin_cos();
        let r = self.elements.first().copied().unwrap_or([0.0, 0.0]);
        DVector::from_iterator(
            self.len(),
            self.elements.iter().map(|p| {
                let phase = TAU * ((p[0] - r[0]) * c + (p[1] - r[1]) * s);
                polar(1.0, phase)
            }),
        )
    }
}

/// Transmit response `a(φ)`, `φ` in the HV body frame.
pub fn steering_tx(geom: &ArrayGeometry, phi: f64) -> DVector<C64> {
    geom.steering(phi)
}

/// Receive response `b(θ)`, `θ` in the SV frame.
pub fn steering_rx(geom: &ArrayGeometry, theta: f64) -> DVector<C64> {
    geom.steering(theta)
}

/// Constant-amplitude zero-autocorrelation (Zadoff–Chu, root 1) sequence.
fn cazac(n: usize) -> Vec<C64> {
    let odd = (n % 2) as f64;
    (0..n)
        .map(|k| {
            let k = k as f64;
            polar(1.0, -PI * k * (k + odd) / n as f64)
        })
        .collect()
}

/// One orthogonal waveform per transmit antenna, sampled at the bandwidth.
///
/// Antenna `m` sends a CAZAC period of `N = M_t · zone` samples cyclically
/// shifted by `m · zone`; in frequency that is the base spectrum multiplied
/// by row `m` of the `M_t × M_t` Fourier codebook, repeated over groups of
/// `M_t` subcarriers. A cyclic prefix and suffix of `guard` samples keep the
/// correlation periodic for arrivals up to `guard` samples apart, where every
/// nonzero lag below `zone` correlates to exactly zero. The shifted copies
/// alias at lag `zone`, so the zone is kept longer than the receive window
/// (`2 · guard` plus margins) to push those aliases out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    /// `M_t × M_t` unitary Fourier codebook.
    pub codebook: DMatrix<C64>,
    /// Zero-correlation zone, samples.
    pub zone: usize,
    /// Cyclic extension on each side, samples.
    pub guard: usize,
    pub bandwidth: f64,
    /// `M_t × N` unit-energy periods.
    pub samples: DMatrix<C64>,
}

impl WaveformSet {
    pub fn fourier(tx: usize, zone: usize, guard: usize, bandwidth: f64) -> Result<Self> {
        let m = tx.max(1);
        if zone <= 2 * (guard + GUARD_SAMPLES) + 2 {
            return Err(Error::InvalidArgument(
                "zero-correlation zone must exceed twice the guard",
            ));
        }
        let scale = 1.0 / (m as f64).sqrt();
        let codebook = DMatrix::from_fn(m, m, |r, k| polar(scale, -TAU * (r * k) as f64 / m as f64));
        let n = m * zone;
        let base = cazac(n);
        let norm = 1.0 / (n as f64).sqrt();
        let samples = DMatrix::from_fn(m, n, |r, i| base[(i + n - r * zone) % n] * norm);
        Ok(Self {
            codebook,
            zone,
            guard,
            bandwidth,
            samples,
        })
    }

    pub fn tx_count(&self) -> usize {
        self.codebook.nrows()
    }

    /// Samples per period.
    pub fn period(&self) -> usize {
        self.samples.ncols()
    }

    /// Transmitted length including the cyclic extensions, samples.
    pub fn len(&self) -> usize {
        self.period() + 2 * self.guard
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Waveform duration `T_w`, seconds.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.bandwidth
    }

    /// Duration of the zero-correlation zone, seconds.
    pub fn symbol_interval(&self) -> f64 {
        self.zone as f64 / self.bandwidth
    }

    /// `Σ_n s[n] s[n]ᴴ` over one period; identity for a valid set.
    pub fn gram(&self) -> DMatrix<C64> {
        &self.samples * self.samples.adjoint()
    }

    /// Arrival-time spread the cyclic extension absorbs.
    pub fn covers_delay_spread(&self, delay_spread: f64) -> bool {
        delay_spread * self.bandwidth <= self.guard as f64
    }

    /// Transmitted waveform of antenna `m` at fractional sample index `x`.
    fn at(&self, m: usize, x: f64) -> C64 {
        let k = x.floor();
        let f = x - k;
        let n = self.period() as i64;
        let get = |i: f64| {
            if i < 0.0 || i >= self.len() as f64 {
                C64::new(0.0, 0.0)
            } else {
                let j = (i as i64 - self.guard as i64).rem_euclid(n) as usize;
                self.samples[(m, j)]
            }
        };
        (get(k) * (1.0 - f) + get(k + 1.0) * f) * self.transmit_scale()
    }

    /// Amplitude taking the unit-energy periods to unit power per sample.
    pub fn transmit_scale(&self) -> f64 {
        (self.period() as f64 / self.tx_count() as f64).sqrt()
    }
}

/// Channel timing sanity check: the channel must stay put for the whole
/// waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalTiming {
    pub coherence: f64,
    pub duration: f64,
    pub delay_spread: f64,
}

impl SignalTiming {
    /// Coherence time from the largest Doppler shift, `≈ 0.423 / f_D`.
    pub fn coherence_from_doppler(max_doppler: f64) -> f64 {
        0.423 / max_doppler
    }

    /// `T_c ≥ 10 T_w`.
    pub fn quasi_static(&self) -> bool {
        self.coherence >= 10.0 * self.duration
    }
}

/// One propagation path as seen by the waveform simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPath {
    pub aoa: f64,
    pub aod: f64,
    /// Absolute arrival time, seconds.
    pub toa: f64,
    pub gain: C64,
}

/// Sampled array output.
#[derive(Debug, Clone, PartialEq)]
pub struct RxStream {
    /// `M_r × N`.
    pub samples: DMatrix<C64>,
    /// Time of sample 0, seconds.
    pub start: f64,
    pub bandwidth: f64,
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, power: f64) -> C64 {
    let s = (power / 2.0).sqrt();
    C64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Superposes `γ b(θ) a(φ)ᵀ s(t − λ)` for every path plus circular Gaussian
/// noise of the given per-sample power.
pub fn synthesize_rx<R: Rng + ?Sized>(
    paths: &[SignalPath],
    waveforms: &WaveformSet,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    noise_power: f64,
    rng: &mut R,
) -> Result<RxStream> {
    if paths.is_empty() {
        return Err(Error::EmptyScene);
    }
    if tx.len() != waveforms.tx_count() {
        return Err(Error::InvalidArgument("transmit array and waveform set disagree"));
    }
    let b = waveforms.bandwidth;
    let first = paths.iter().map(|p| p.toa).fold(f64::INFINITY, f64::min);
    let last = paths.iter().map(|p| p.toa).fold(f64::NEG_INFINITY, f64::max);
    let start = (first * b).floor() / b - GUARD_SAMPLES as f64 / b;
    let n = ((last - start) * b).ceil() as usize + waveforms.len() + 2 * GUARD_SAMPLES;
    let mut out = DMatrix::from_element(rx.len(), n, C64::new(0.0, 0.0));
    for p in paths {
        let a = steering_tx(tx, p.aod);
        let br = steering_rx(rx, p.aoa) * p.gain;
        let delay = (p.toa - start) * b;
        let lo = delay.floor().max(0.0) as usize;
        let hi = (lo + waveforms.len() + 2).min(n);
        for i in lo..hi {
            let x = i as f64 - delay;
            let mut v = C64::new(0.0, 0.0);
            for m in 0..tx.len() {
                v += a[m] * waveforms.at(m, x);
            }
            if v.norm_sqr() > 0.0 {
                for r in 0..rx.len() {
                    out[(r, i)] += br[r] * v;
                }
            }
        }
    }
    if noise_power > 0.0 {
        for v in out.iter_mut() {
            *v += complex_noise(rng, noise_power);
        }
    }
    Ok(RxStream {
        samples: out,
        start,
        bandwidth: b,
    })
}

/// Matched-filter peak.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPeak {
    /// Sample lag.
    pub lag: usize,
    /// Arrival time from the lag refined by interpolating the peak shape,
    /// seconds.
    pub time: f64,
    /// `M_r × M_t` matched-filter output at the lag.
    pub y: DMatrix<C64>,
    /// Outputs one lag before and after (zero outside the search window).
    pub neighbors: [DMatrix<C64>; 2],
    /// Arrival time of the lag itself, seconds.
    pub lag_time: f64,
    pub sample_interval: f64,
    pub norm: f64,
}

impl FilterPeak {
    /// Arrival time of one path of this peak, from its beamformed response
    /// at the lag and its two neighbors. Paths sharing a peak (or leaking
    /// into its neighbors) separate spatially, which the norm cannot do.
    pub fn path_time(&self, rx_steering: &DVector<C64>, tx_steering: &DVector<C64>) -> f64 {
        let a = tx_steering.map(|x| x.conj());
        let beam = |y: &DMatrix<C64>| modulus((rx_steering.adjoint() * y).transpose().dot(&a));
        let (l, c, r) = (beam(&self.neighbors[0]), beam(&self.y), beam(&self.neighbors[1]));
        self.lag_time + triangle_offset(l, c, r) * self.sample_interval
    }
}

/// Offset of a triangular pulse's apex from the middle of three samples,
/// after removing the smaller outer sample as a floor.
fn triangle_offset(left: f64, center: f64, right: f64) -> f64 {
    let floor = left.min(right);
    let denom = (center - floor) + (left.max(right) - floor);
    if denom <= 0.0 {
        return 0.0;
    }
    ((right - left) / denom).clamp(-1.0, 1.0)
}

/// `Y[z] = Σ_n r[n] s[n − z]ᴴ` (one period, placed after the prefix) for
/// every lag, keeping local maxima of
/// `‖Y[z]‖` above the noise floor.
pub fn matched_filter(stream: &RxStream, waveforms: &WaveformSet) -> Result<Vec<FilterPeak>> {
    let n = stream.samples.ncols();
    let (l, g) = (waveforms.period(), waveforms.guard);
    if n < l + g {
        return Err(Error::InvalidArgument("stream shorter than the waveform"));
    }
    let s_h = waveforms.samples.adjoint();
    // lag z correlates the period that starts after the prefix
    let lags = n - l - g + 1;
    let ys: Vec<DMatrix<C64>> = (0..lags).map(|z| stream.samples.columns(z + g, l) * &s_h).collect();
    let norms: Vec<f64> = ys.iter().map(|y| y.norm()).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    let strongest = sorted[sorted.len() - 1];
    let threshold = (floor * PEAK_OVER_FLOOR).max(strongest * PEAK_DYNAMIC_RANGE);
    let mut peaks = Vec::new();
    for z in 0..lags {
        let v = norms[z];
        let left = if z > 0 { norms[z - 1] } else { 0.0 };
        let right = if z + 1 < lags { norms[z + 1] } else { 0.0 };
        if v > threshold && v > left && v >= right && v > 0.0 {
            // triangular correlation: the neighbors share the fractional delay
            let frac = triangle_offset(left, v, right).clamp(-0.5, 0.5);
            let zero = || DMatrix::zeros(ys[z].nrows(), ys[z].ncols());
            peaks.push(FilterPeak {
                lag: z,
                time: stream.start + (z as f64 + frac) / stream.bandwidth,
                y: ys[z].clone(),
                neighbors: [
                    if z > 0 { ys[z - 1].clone() } else { zero() },
                    if z + 1 < lags { ys[z + 1].clone() } else { zero() },
                ],
                lag_time: stream.start + z as f64 / stream.bandwidth,
                sample_interval: 1.0 / stream.bandwidth,
                norm: v,
            });
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    Ok(peaks)
}

/// Number of dominant singular values (sorted descending): the position of
/// the largest ratio between consecutive ones. Values below `1e-12` of the
/// largest count as that floor, so exact zeros do not win.
pub fn signal_count(singular: &[f64]) -> usize {
    let floor = singular.first().copied().unwrap_or(0.0) * 1e-12;
    let mut best = (1, 0.0);
    for i in 0..singular.len().saturating_sub(1) {
        let ratio = singular[i].max(floor) / singular[i + 1].max(floor);
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    best.0
}

/// Eigenvectors of a Hermitian matrix ordered by decreasing eigenvalue.
fn dominant_subspace(h: DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vecs, order.iter().map(|&i| eig.eigenvalues[i]).collect())
}

/// `‖Uᴴ x̂‖²` for a unit-normalized steering vector.
fn captured(basis: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    (basis.adjoint() * v).norm_squared() / v.norm_squared()
}

fn spectrum_peaks(f: impl Fn(f64) -> f64, step: f64, count: usize) -> Vec<f64> {
    let n = (TAU / step).round() as usize;
    let vals: Vec<f64> = (0..n).map(|i| f(i as f64 * step)).collect();
    let mut peaks: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let l = vals[(i + n - 1) % n];
            let r = vals[(i + 1) % n];
            vals[i] > l && vals[i] >= r
        })
        .map(|i| (i as f64 * step, vals[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(count);
    peaks
        .into_iter()
        .map(|(x, _)| {
            let (x, _) = search::golden_section(|t| -f(t), x - step, x + step, 1e-9);
            wrap_angle(x)
        })
        .collect()
}

/// Joint arrival/departure angles present in one matched-filter matrix.
///
/// The signal subspace of the vectorized model `Σ γ (a ⊗ b)` is the tensor
/// product of the column space of `Y` (arrival side) and the conjugate row
/// space (departure side), so the 2D pseudo-spectrum
/// `1 / (1 − ‖P_r b̂(θ)‖² ‖P_t â(φ)‖²)` separates and its peaks are the
/// products of the 1D peaks. Candidate pairs are matched by beamformer
/// output `|b̂ᴴ Y â*|`.
pub fn music_2d(
    y: &DMatrix<C64>,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    count: Option<usize>,
    step: f64,
) -> Result<Vec<(f64, f64)>> {
    let limit = tx.len().min(rx.len());
    if y.nrows() != rx.len() || y.ncols() != tx.len() {
        return Err(Error::InvalidArgument("matched-filter matrix does not fit the arrays"));
    }
    // column spaces of Y (arrival side) and Yᵀ (departure side), from
    // Hermitian eigendecompositions; squared singular values come with them
    let (u, power) = dominant_subspace(y * y.adjoint());
    let sv: Vec<f64> = power.iter().map(|p| p.max(0.0).sqrt()).collect();
    // a square noise matrix has near-zero trailing singular values whose
    // ratios are meaningless; look for the gap in the leading half only
    let k = count.unwrap_or_else(|| signal_count(&sv[..(limit / 2 + 1).min(sv.len())]));
    if k >= limit {
        return Err(Error::SubspaceRank { count: k, limit });
    }
    let (v, _) = dominant_subspace(y.transpose() * y.map(|x| x.conj()));
    let us = u.columns(0, k).into_owned();
    let vs = v.columns(0, k).into_owned();
    let thetas = spectrum_peaks(|t| captured(&us, &steering_rx(rx, t)), step, k);
    let phis = spectrum_peaks(|p| captured(&vs, &steering_tx(tx, p)), step, k);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &t) in thetas.iter().enumerate() {
        let b = steering_rx(rx, t);
        let by = b.adjoint() * y;
        for (j, &p) in phis.iter().enumerate() {
            let a = steering_tx(tx, p);
            pairs.push((modulus(by.transpose().dot(&a.map(|x| x.conj()))), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut used_t, mut used_p) = (vec![false; thetas.len()], vec![false; phis.len()]);
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_p[j] {
            used_t[i] = true;
            used_p[j] = true;
            out.push((thetas[i], phis[j]));
        }
    }
    Ok(out)
}

/// Settings of the waveform chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub bandwidth: f64,
    /// Zero-correlation zone, samples.
    pub zone: usize,
    /// Cyclic extension, samples; bounds the tolerated delay spread.
    pub guard: usize,
    pub music_step: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        // 200 samples at 100 MHz cover about 600 m of excess path length
        Self {
            tx_antennas: 8,
            rx_antennas: 8,
            bandwidth: 100e6,
            zone: 432,
            guard: 200,
            music_step: DEFAULT_MUSIC_STEP,
        }
    }
}

/// Simulated and estimated view of one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendOutput {
    pub observations: Vec<PathObservation>,
    pub peaks: usize,
}

/// Signal paths for observed budgets: amplitude from the received power,
/// uniform random phase, arrival time `d / c + Γ`.
pub fn signal_paths<R: Rng + ?Sized>(budgets: &[PathBudget], clock_gap: f64, rng: &mut R) -> Vec<SignalPath> {
    budgets
        .iter()
        .map(|b| {
            let amp = 10f64.powf(b.rx_power / 20.0);
            SignalPath {
                aoa: b.tagged.path.aoa,
                aod: b.tagged.path.aod,
                toa: b.tagged.path.length / SPEED_OF_LIGHT + clock_gap,
                gain: polar(amp, rng.random_range(0.0..TAU)),
            }
        })
        .collect()
}

/// Runs synthesis, matched filtering and MUSIC. The strongest peak is the
/// TDoA reference; observations are ordered by arrival time.
pub fn estimate_paths<R: Rng + ?Sized>(
    paths: &[SignalPath],
    cfg: &FrontendConfig,
    noise_power: f64,
    rng: &mut R,
) -> Result<FrontendOutput> {
    let tx = ArrayGeometry::uca(cfg.tx_antennas);
    let rx = ArrayGeometry::uca(cfg.rx_antennas);
    let wf = WaveformSet::fourier(cfg.tx_antennas, cfg.zone, cfg.guard, cfg.bandwidth)?;
    let stream = synthesize_rx(paths, &wf, &tx, &rx, noise_power, rng)?;
    let peaks = matched_filter(&stream, &wf)?;
    let reference = peaks
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm.total_cmp(&b.1.norm))
        .map(|(i, _)| i)
        .ok_or(Error::NoPeaks)?;
    let mut observations = Vec::new();
    let mut ref_index = 0;
    for (i, pk) in peaks.iter().enumerate() {
        let angles = music_2d(&pk.y, &tx, &rx, None, cfg.music_step)?;
        for (j, (theta, phi)) in angles.into_iter().enumerate() {
            if i == reference && j == 0 {
                ref_index = observations.len();
            }
            observations.push(PathObservation {
                aoa: theta,
                aod: phi,
                elevation: None,
                toa: pk.path_time(&steering_rx(&rx, theta), &steering_tx(&tx, phi)),
                tdoa: 0.0,
                cluster: None,
                slot: None,
            });
        }
    }
    let t_ref = observations[ref_index].toa;
    for (i, o) in observations.iter_mut().enumerate() {
        o.tdoa = if i == ref_index { 0.0 } else { o.toa - t_ref };
    }
    Ok(FrontendOutput {
        peaks: peaks.len(),
        observations,
    })
}

/// Waveform-chain replacement for the parametric noise surrogate.
pub fn observe_budgets<R: Rng + ?Sized>(
    budgets: &[PathBudget],
    cfg: &FrontendConfig,
    noise_power_dbm: f64,
    clock_gap: f64,
    rng: &mut R,
) -> Result<FrontendOutput> {
    let paths = signal_paths(budgets, clock_gap, rng);
    estimate_paths(&paths, cfg, 10f64.powf(noise_power_dbm / 10.0), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn broadside_ula_is_all_ones() {
        let a = ArrayGeometry::ula(8, 0.5).steering(0.0);
        assert!(a.iter().all(|v| modulus(v - C64::new(1.0, 0.0)) < 1e-12));
    }

    #[test]
    fn unit_modulus_and_reference() {
        let g = ArrayGeometry::uca(8);
        assert!((g.min_spacing() - 0.5).abs() < 1e-12);
        for k in 0..36 {
            let a = g.steering(deg(10.0 * k as f64));
            assert!(modulus(a[0] - C64::new(1.0, 0.0)) < 1e-12);
            assert!(a.iter().all(|v| (modulus(*v) - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn ula_inner_product_is_dirichlet() {
        let g = ArrayGeometry::ula(8, 0.5);
        for (t1, t2) in [(0.1, 0.4), (-0.7, 0.2), (1.0, 1.3)] {
            let ip = modulus((g.steering(t1).adjoint() * g.steering(t2))[(0, 0)]) / 8.0;
            let psi = PI * (f64::sin(t1) - f64::sin(t2));
            let dirichlet = ((8.0 * psi / 2.0).sin() / (8.0 * (psi / 2.0).sin())).abs();
            assert!((ip - dirichlet).abs() < 1e-12, "{ip} {dirichlet}");
        }
    }

    #[test]
    fn codebook_is_orthonormal() {
        let wf = WaveformSet::fourier(8, 96, 32, 100e6).unwrap();
        let gram = wf.gram();
        assert!((gram - DMatrix::<C64>::identity(8, 8)).norm() < 1e-12);
        let cb = &wf.codebook * wf.codebook.adjoint();
        assert!((cb - DMatrix::<C64>::identity(8, 8)).norm() < 1e-12);
    }

    fn single(toa: f64, gain: C64) -> (RxStream, WaveformSet, ArrayGeometry) {
        let wf = WaveformSet::fourier(8, 96, 32, 100e6).unwrap();
        let g = ArrayGeometry::uca(8);
        let p = SignalPath {
            aoa: deg(30.0),
            aod: deg(120.0),
            toa,
            gain,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (synthesize_rx(&[p], &wf, &g, &g, 0.0, &mut rng).unwrap(), wf, g)
    }

    #[test]
    fn noiseless_energy_bookkeeping() {
        let gain = C64::new(0.3, -0.4);
        let (s, _, _) = single(40e-9, gain);
        let energy = s.samples.norm_squared();
        // unit power per sample on every receive antenna, over the period
        // and both cyclic extensions
        let expected = gain.norm_sqr() * 8.0 * (768.0 + 64.0);
        assert!((energy - expected).abs() < 1e-6 * energy);
    }

    #[test]
    fn single_path_unique_peak() {
        let gain = C64::new(0.0, 2.0);
        let (s, wf, _) = single(1e-6, gain);
        let peaks = matched_filter(&s, &wf).unwrap();
        assert_eq!(peaks.len(), 1);
        let pk = &peaks[0];
        assert_eq!(s.start + pk.lag as f64 / s.bandwidth, 1e-6);
        assert!((pk.time - 1e-6).abs() < 1e-15);
        // rank one with every entry of modulus |γ| √(N/M_t): spectral norm
        // |γ| M_t √(N/M_t)
        assert!((pk.norm - 2.0 * 8.0 * 96f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn fractional_delay_is_interpolated() {
        let (s, wf, _) = single(1e-6 + 0.3e-8, C64::new(1.0, 0.0));
        let peaks = matched_filter(&s, &wf).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].time - (1e-6 + 0.3e-8)).abs() < 1e-11, "{}", peaks[0].time);
    }

    #[test]
    fn two_paths_two_peaks() {
        let wf = WaveformSet::fourier(8, 96, 32, 100e6).unwrap();
        let g = ArrayGeometry::uca(8);
        let mk = |toa, aoa: f64| SignalPath {
            aoa,
            aod: 0.5,
            toa,
            gain: C64::new(1.0, 0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = synthesize_rx(&[mk(100e-9, 0.3), mk(150e-9, 2.0)], &wf, &g, &g, 0.0, &mut rng).unwrap();
        let peaks = matched_filter(&s, &wf).unwrap();
        let times: Vec<f64> = peaks.iter().map(|p| p.time).collect();
        assert_eq!(times.len(), 2, "{times:?}");
        assert!((times[0] - 100e-9).abs() < 1e-12 && (times[1] - 150e-9).abs() < 1e-12);
    }

    #[test]
    fn music_recovers_noiseless_pair() {
        let (s, wf, g) = single(1e-6, C64::new(1.0, 1.0));
        let peaks = matched_filter(&s, &wf).unwrap();
        let est = music_2d(&peaks[0].y, &g, &g, None, DEFAULT_MUSIC_STEP).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].0 - deg(30.0)).abs() < DEFAULT_MUSIC_STEP, "{est:?}");
        assert!((est[0].1 - deg(120.0)).abs() < DEFAULT_MUSIC_STEP);
    }

    #[test]
    fn music_separates_co_arriving_paths() {
        let g = ArrayGeometry::uca(8);
        let y = steering_rx(&g, 0.4) * steering_tx(&g, 2.0).transpose()
            + steering_rx(&g, 3.5) * steering_tx(&g, 5.0).transpose() * C64::new(0.0, 0.7);
        let mut est = music_2d(&y, &g, &g, None, DEFAULT_MUSIC_STEP).unwrap();
        est.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(est.len(), 2);
        assert!(
            (est[0].0 - 0.4).abs() < 1e-6 && (est[0].1 - 2.0).abs() < 1e-6,
            "{est:?}"
        );
        assert!((est[1].0 - 3.5).abs() < 1e-6 && (est[1].1 - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rotation_shifts_peak() {
        let g = ArrayGeometry::uca(8);
        let base = music_2d(
            &(steering_rx(&g, 1.0) * steering_tx(&g, 2.0).transpose()),
            &g,
            &g,
            None,
            DEFAULT_MUSIC_STEP,
        )
        .unwrap();
        let rot = music_2d(
            &(steering_rx(&g, 1.3) * steering_tx(&g, 2.0).transpose()),
            &g,
            &g,
            None,
            DEFAULT_MUSIC_STEP,
        )
        .unwrap();
        assert!(((rot[0].0 - base[0].0) - 0.3).abs() < 1e-6, "{base:?} {rot:?}");
    }

    #[test]
    fn errors() {
        let g = ArrayGeometry::uca(4);
        let y = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        assert_eq!(
            music_2d(&y, &g, &g, Some(4), DEFAULT_MUSIC_STEP).unwrap_err(),
            Error::SubspaceRank { count: 4, limit: 4 }
        );
        let wf = WaveformSet::fourier(4, 96, 32, 100e6).unwrap();
        let quiet = RxStream {
            samples: DMatrix::from_element(4, 600, C64::new(0.0, 0.0)),
            start: 0.0,
            bandwidth: 100e6,
        };
        assert_eq!(matched_filter(&quiet, &wf).unwrap_err(), Error::NoPeaks);
    }
}
