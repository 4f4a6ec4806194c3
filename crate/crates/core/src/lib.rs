//! Hidden-vehicle sensing from asynchronous vehicle-to-vehicle multipath.
//!
//! A sensing vehicle (SV) sits at the origin with its heading on +X. A hidden
//! vehicle (HV) transmits; every single-bounce path reaching the SV carries an
//! angle of arrival, an angle of departure and a time of arrival offset by an
//! unknown clock gap. Differences of arrival times cancel the clock gap, and
//! the path geometry closes into linear systems once the HV orientation is
//! fixed. This crate provides:
//!
//! - [`geometry`]: exact forward synthesis (scene to path parameters) and the
//!   inverse origin equations, used as the oracle everywhere else.
//! - [`single`]: orientation search by null-space discriminant followed by a
//!   least-squares solve, in 2D and 3D.
//! - [`multicluster`]: four clusters on a rectangle with separable waveform
//!   sets; recovers the vertices, heading, length and width jointly.
//! - [`size`]: enclosing disk / box (sphere / cuboid) minimization for
//!   clusters that share one waveform set.
//! - [`augment`]: sequential path combining and random directional beams.
//! - [`channel`]: geometry-based stochastic V2V channel and a parametric
//!   estimation-noise surrogate.
//! - [`frontend`]: waveform-level chain (array responses, matched filter,
//!   2D MUSIC) producing the same observations as the parametric surrogate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod augment;
pub mod channel;
mod error;
pub mod frontend;
pub mod geometry;
mod linalg;
pub mod multicluster;
pub mod qp;
pub mod search;
pub mod single;
pub mod size;

pub use error::{Error, Result};
pub use geometry::{Elevation, PathObservation, PathTruth, Point2, Point3, Pose2D, Pose3D, SPEED_OF_LIGHT};
pub use single::SensingEstimate;

/// Version tag stamped on bench output rows.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
