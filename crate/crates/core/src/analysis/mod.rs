//! Disturbance maps, calibration estimators and tomographic validation.

pub mod calibration;
pub mod disturbance;
pub mod tomography;

pub use calibration::{calibrate_eta, estimate_eta, estimate_gamma_ramsey, EtaEstimate};
pub use disturbance::{commutator_bound, disturbance_at, disturbance_map, DisturbanceField, DisturbanceGrid};
pub use tomography::{simulate_tomography, tomo_validate, TomoComparison, TomoPulse, TomoSimulation};
