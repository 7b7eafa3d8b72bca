//! Distribution-free CUSUM charts whose control limits depend on the current
//! sprint length, the number of steps since the CUSUM last left zero.
//!
//! Limits are calibrated from in-control Phase-I data by a smoothed bootstrap
//! ([`calibration::calibrate`]). The crate also carries the classical CUSUM
//! and a signed-rank nonparametric CUSUM for comparison ([`baselines`]),
//! AR prewhitening for serially correlated data ([`prewhiten`]) and the
//! simulation models used to evaluate the charts ([`distributions`]).
//!
//! The crate is `no_std` and needs only `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod calibration;
pub mod cusum;
pub mod density;
pub mod distributions;
pub mod prewhiten;
pub mod rng;
pub mod stats;

pub use calibration::{calibrate, calibrate_known, Calibration, CalibrationConfig, CalibrationError};
pub use cusum::{cusum_step, run_length, signal_check, CusumState, LimitSchedule, RunOutcome};
pub use density::{FittedDensity, Standardization};
pub use distributions::{DistributionKind, DistributionModel, Sampler, ShiftSpec};
