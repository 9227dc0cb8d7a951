//! Streaming principal component estimation from Markovian data streams.
//!
//! The crate is organised bottom-up:
//!
//! - [`markov`]: finite-state chains, stationary law, `|λ₂(P)|`, `d_mix`,
//!   `τ_mix` and the reversed-chain kernel.
//! - [`statedist`]: per-state data distributions `D(s)`, sample generation
//!   and the ensemble covariance `Σ = E_π[Σ_s]`.
//! - [`streaming`]: Oja's algorithm (full and downsampled), step-size
//!   schedules and the `sin²` error metric.
//! - [`offline`]: the empirical-covariance baseline.
//! - [`oracle`]: exact small-instance checks of the mixing and
//!   matrix-product bounds that the convergence analysis relies on.
//! - [`harness`]: multi-trial experiments, sweeps, CSV and SVG output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod linalg;
pub mod markov;
pub mod offline;
pub mod oracle;
pub mod seed;
pub mod statedist;
pub mod streaming;

pub use nalgebra;

pub use markov::{ChainSpectrum, MarkovError, MixingProfile, TransitionMatrix};
pub use offline::{EmpiricalCovariance, LeadingEigen};
pub use statedist::{AssumptionBounds, BaseNoise, EnsembleCovariance, StateDistributionSet};
pub use streaming::{Algorithm, ErrorTrace, OjaEstimator, ScheduleMode, StepSchedule};
