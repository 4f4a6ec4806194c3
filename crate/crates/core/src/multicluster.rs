//! Four antenna clusters on the corners of a rectangle, each with its own
//! waveform set so every path is tagged with its cluster.
//!
//! Path origins are the cluster corners, i.e. the centroid shifted by
//! `±L/2` along the heading and `±W/2` across it. Those shifts are linear in
//! `(L, W)` once the orientation is fixed, so the length and width join the
//! bounce ranges as least-squares unknowns and the orientation search stays
//! one-dimensional. Six paths over at least two clusters are needed.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{ClusterLayout, PathObservation, Point2, Pose2D};
use crate::single::{
    self, assemble_with, best_solution, into_estimate, orientation_candidates, Extension, LinearSystem, SensingEstimate,
};

/// Smallest length/width reported when the solve returns a negative size.
pub const SIZE_FLOOR: f64 = 0.1;

const MIN_PATHS: usize = 6;

fn cluster_tags(obs: &[PathObservation]) -> Result<Vec<usize>> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| match o.cluster {
            None => Err(Error::MissingTag {
                index: i,
                what: "cluster",
            }),
            Some(k) if k >= 4 => Err(Error::InvalidArgument("cluster index must be below 4")),
            Some(k) => Ok(k),
        })
        .collect()
}

/// Per-cluster path counts.
pub fn group_counts(obs: &[PathObservation]) -> Result<[usize; 4]> {
    let mut counts = [0; 4];
    for k in cluster_tags(obs)? {
        counts[k] += 1;
    }
    Ok(counts)
}

/// Extended system `[A | L-column | W-column]`, `2(P−1) × (P+3)`.
pub fn assemble_extended(obs: &[PathObservation], omega: f64) -> Result<LinearSystem> {
    let tags = cluster_tags(obs)?;
    assemble_with(
        obs,
        omega,
        None,
        Extension::Rectangle {
            clusters: &tags,
            known: None,
        },
    )
}

/// Distance of `B` to the column space of the extended matrix.
pub fn discriminant_extended(obs: &[PathObservation], omega: f64) -> Result<f64> {
    Ok(single::system_discriminant(&assemble_extended(obs, omega)?))
}

fn finish(mut est: SensingEstimate, length: f64, width: f64) -> SensingEstimate {
    let clamped = length < SIZE_FLOOR || width < SIZE_FLOOR;
    let (l, w) = (length.max(SIZE_FLOOR), width.max(SIZE_FLOOR));
    let pose = Pose2D::new(est.position.x, est.position.y, est.omega);
    let v = ClusterLayout::Rectangle { length: l, width: w }.positions(&pose);
    est.vertices = Some([v[0], v[1], v[2], v[3]]);
    est.size = Some((l, w));
    est.size_clamped = clamped;
    est
}

/// Centroid, heading, length, width and the four corners.
pub fn estimate_decoupled(obs: &[PathObservation]) -> Result<SensingEstimate> {
    if obs.len() < MIN_PATHS {
        return Err(Error::Infeasible {
            required: MIN_PATHS,
            available: obs.len(),
        });
    }
    let tags = cluster_tags(obs)?;
    if group_counts(obs)?.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateGeometry("paths from fewer than two clusters"));
    }
    let ext = Extension::Rectangle {
        clusters: &tags,
        known: None,
    };
    let cands: Vec<(f64, Option<f64>)> = orientation_candidates(obs, single::DEFAULT_GRID_STEP, ext)?
        .into_iter()
        .map(|(w, _)| (w, None))
        .collect();
    let s = best_solution(obs, &cands, ext)?;
    let p = obs.len();
    let (l, w) = (s.sol.z[p + 1], s.sol.z[p + 2]);
    Ok(finish(into_estimate(s, obs), l, w))
}

/// Same as [`estimate_decoupled`] with the rectangle size given; only four
/// paths are needed. A zero size reduces to [`single::estimate_2d`].
pub fn estimate_known_size(obs: &[PathObservation], length: f64, width: f64) -> Result<SensingEstimate> {
    if obs.len() < 4 {
        return Err(Error::Infeasible {
            required: 4,
            available: obs.len(),
        });
    }
    let tags = cluster_tags(obs)?;
    let ext = Extension::Rectangle {
        clusters: &tags,
        known: Some((length, width)),
    };
    let cands: Vec<(f64, Option<f64>)> = orientation_candidates(obs, single::DEFAULT_GRID_STEP, ext)?
        .into_iter()
        .map(|(w, _)| (w, None))
        .collect();
    let s = best_solution(obs, &cands, ext)?;
    let mut est = into_estimate(s, obs);
    let pose = Pose2D::new(est.position.x, est.position.y, est.omega);
    let v = ClusterLayout::Rectangle { length, width }.positions(&pose);
    est.vertices = Some([v[0], v[1], v[2], v[3]]);
    est.size = Some((length, width));
    Ok(est)
}

/// Largest distance between reported and true corners.
pub fn vertex_error(est: &SensingEstimate, truth: &[Point2]) -> Option<f64> {
    let v = est.vertices?;
    Some(v.iter().zip(truth).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}
