//! Reference device parameters. Rates are angular (s⁻¹).
//!
//! Only the measurement rates, efficiencies, cavity linewidths and dispersive
//! shifts enter the simulations; the remaining values describe the frame and
//! hardware and are kept for reference.

use core::f64::consts::TAU;

/// Measurement-induced dephasing rate of channel 1, `2π × 122 kHz`.
pub const GAMMA1: f64 = TAU * 122e3;
/// Channel 2 is taken to match channel 1.
pub const GAMMA2: f64 = GAMMA1;
pub const ETA1: f64 = 0.41;
pub const ETA2: f64 = 0.49;

/// Record step used for trajectory reconstruction.
pub const DT_RECORD: f64 = 16e-9;
/// Internal simulation step.
pub const DT_SIM: f64 = 4e-9;
/// Interval of the disturbance maps.
pub const DISTURBANCE_INTERVAL: f64 = 64e-9;
/// Readout duration of a single run.
pub const RUN_DURATION: f64 = 1e-6;

pub const CHI1: f64 = TAU * 0.18e6;
pub const CHI2: f64 = TAU * 0.23e6;
pub const KAPPA1: f64 = TAU * 7.2e6;
pub const KAPPA2: f64 = TAU * 4.3e6;

/// Selection ring of the angular diffusion analysis.
pub const RING_INNER: f64 = 0.86;
pub const RING_OUTER: f64 = 0.92;
/// Bloch radius of the state prepared for the angular diffusion analysis.
pub const PREP_RADIUS: f64 = 0.89;

/// Voxels per axis of the tomographic comparison.
pub const TOMO_VOXELS: usize = 15;

pub const T1: f64 = 60e-6;
pub const T2_ECHO: f64 = 40e-6;
pub const RABI_DECAY: f64 = 25e-6;
pub const RABI_FREQUENCY: f64 = TAU * 40e6;
pub const QUBIT_FREQUENCY: f64 = TAU * 4.262e9;
pub const CHARGING_ENERGY: f64 = TAU * 220e6;
pub const CAVITY1_FREQUENCY: f64 = TAU * 6.666e9;
pub const CAVITY2_FREQUENCY: f64 = TAU * 7.391e9;
/// Residual local-oscillator field amplitude (`10⁻⁴` photons).
pub const LO_LEAK_AMPLITUDE: f64 = 0.01;
