//! Closure estimators for the measurement rate and quantum efficiency.

use alloc::format;
use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::engine::{simulate_trajectory, steps_for, ImperfectionParams, StepPlan};
use crate::ensemble::{trajectory_seed, try_par_map};
use crate::error::{Error, Result};
use crate::fokker_planck::{sample_ensemble, InitialCondition, McConfig};
use crate::state::{Bloch, MeasChannel, QubitState};

/// Smallest ensemble accepted by the simulated calibrations.
pub const MIN_ENSEMBLE: usize = 100;

/// Slack above one before the efficiency estimate is clipped.
pub const ETA_CLIP_TOLERANCE: f64 = 0.05;

/// Ensemble-mean Bloch component orthogonal to the measured axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyData {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub n_traj: usize,
}

/// Simulate a Ramsey decay: prepare the in-plane state orthogonal to the
/// single active channel and record the ensemble mean of that component.
pub fn ramsey_decay(
    channels: &[MeasChannel],
    times: &[f64],
    config: &McConfig,
) -> Result<RamseyData> {
    let active: Vec<&MeasChannel> = channels.iter().filter(|c| c.gamma > 0.0).collect();
    if active.len() > 1 {
        return Err(Error::Protocol("Ramsey calibration requires a single active channel"));
    }
    if config.n_traj < MIN_ENSEMBLE {
        return Err(Error::InsufficientData(format!("{} trajectories", config.n_traj)));
    }
    let delta = active.first().map_or(channels.first().map_or(0.0, |c| c.delta), |c| c.delta);
    let perp = Bloch::in_plane(1.0, delta + core::f64::consts::FRAC_PI_2);
    let samples = sample_ensemble(&InitialCondition::Point(perp), channels, times, config)?;
    let means = samples
        .iter()
        .map(|states| {
            let comps: Vec<f64> = states.iter().map(|r| r.dot(&perp)).collect();
            crate::ensemble::pairwise_sum(&comps) / states.len() as f64
        })
        .collect();
    Ok(RamseyData { times: times.to_vec(), means, n_traj: config.n_traj })
}

/// Decay rate of `m(t) = A e^{−Γt}` by a log-linear fit weighted by `m²`
/// (the inverse variance of `ln m` for additive noise of fixed size).
/// Points at or below `floor` are dropped.
pub fn fit_decay_rate(times: &[f64], means: &[f64], floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64, f64)> = times
        .iter()
        .zip(means)
        .filter(|(_, &m)| m > floor)
        .map(|(&t, &m)| (t, log(m), m * m))
        .collect();
    if pts.len() < 2 {
        return Err(Error::FitFailed(format!("{} usable points", pts.len())));
    }
    let w: f64 = pts.iter().map(|p| p.2).sum();
    let mt = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitFailed("all points at one time".into()));
    }
    Ok(-sxy / sxx)
}

/// Ramsey estimate of `Γ` for the single active channel.
pub fn estimate_gamma_ramsey(channels: &[MeasChannel], times: &[f64], config: &McConfig) -> Result<f64> {
    gamma_from_ramsey(&ramsey_decay(channels, times, config)?)
}

/// Decay rate of simulated Ramsey data, ignoring means below the noise floor.
pub fn gamma_from_ramsey(data: &RamseyData) -> Result<f64> {
    // Three standard errors of a mean of unit-bounded samples.
    let floor = 3.0 / sqrt(data.n_traj as f64);
    fit_decay_rate(&data.times, &data.means, floor)
}

/// Efficiency estimate with the statistics it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaEstimate {
    pub eta: f64,
    pub mean_up: f64,
    pub mean_down: f64,
    pub sigma: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>())
}

/// `η = (μ↑ − μ↓)² / (8τσ²Γ)` from integrated records `∫V dt` of the two
/// eigenstate preparations, with `σ` the pooled standard deviation.
pub fn estimate_eta(up: &[f64], down: &[f64], gamma: f64, tau: f64) -> Result<EtaEstimate> {
    if up.len() < 2 || down.len() < 2 {
        return Err(Error::InsufficientData("need at least two records per preparation".into()));
    }
    let (mu_up, ss_up) = mean_var(up);
    let (mu_down, ss_down) = mean_var(down);
    let var = (ss_up + ss_down) / (up.len() + down.len() - 2) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    if !(gamma > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter { name: if gamma > 0.0 { "tau" } else { "gamma" }, value: gamma.min(tau) });
    }
    let d = mu_up - mu_down;
    let eta = (d * d / (8.0 * tau * var * gamma)).clamp(0.0, 1.0 + ETA_CLIP_TOLERANCE);
    Ok(EtaEstimate { eta, mean_up: mu_up, mean_down: mu_down, sigma: sqrt(var) })
}

/// Integrated records `∫V dt` for `n_records` trajectories from `initial`.
pub fn integrated_records(
    initial: Bloch,
    channel: &MeasChannel,
    tau: f64,
    dt: f64,
    n_records: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let state = QubitState::from_vector(initial)?;
    let channels = [*channel];
    StepPlan::new(&channels, dt, &ImperfectionParams::default())?;
    steps_for(tau, dt)?;
    try_par_map(n_records, |i| {
        let (_, rec) = simulate_trajectory(
            &state,
            &channels,
            tau,
            dt,
            trajectory_seed(seed, i as u64),
            &ImperfectionParams::default(),
        )?;
        Ok(rec.integrated(0))
    })
}

/// Simulate both eigenstate preparations of `channel` and estimate `η`.
pub fn calibrate_eta(channel: &MeasChannel, tau: f64, dt: f64, n_records: usize, seed: u64) -> Result<EtaEstimate> {
    if n_records < MIN_ENSEMBLE {
        return Err(Error::InsufficientData(format!("{n_records} records per preparation")));
    }
    let axis = channel.axis();
    let up = integrated_records(axis, channel, tau, dt, n_records, seed)?;
    let down = integrated_records(-axis, channel, tau, dt, n_records, seed ^ 0x5A5A_5A5A_5A5A_5A5A)?;
    let tau_eff = steps_for(tau, dt)? as f64 * dt;
    estimate_eta(&up, &down, channel.gamma, tau_eff)
}

/// Noise-free Ramsey curve, `e^{−Γt}`, for checks of the fit alone.
pub fn ideal_ramsey(gamma: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| exp(-gamma * t)).collect()
}
