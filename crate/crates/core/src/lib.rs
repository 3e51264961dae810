//! Continuous weak measurement of a single qubit along one or two
//! non-commuting axes: trajectory simulation, filtering and retrodiction,
//! ensemble distributions, and the analyses built on them.
//!
//! The crate is `no_std` with `alloc`; the default `std` feature only adds
//! parallel ensembles.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod cavity;
pub mod constants;
pub mod engine;
pub mod ensemble;
pub mod fokker_planck;
pub mod error;
pub mod linalg;
pub mod retrodiction;
pub mod state;
pub mod transfer;

pub use engine::{
    filter, generate_step, kraus_step, simulate_decimated, simulate_trajectory, steps_for,
    ImperfectionParams, MeasurementRecord, NoiseSource, StepPlan, Trajectory,
};
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use state::{expectation, sigma_delta, Bloch, MeasChannel, Observable, QubitState};
