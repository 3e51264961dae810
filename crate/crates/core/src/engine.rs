//! Trajectory generation and filtering for one or two simultaneous
//! single-quadrature measurements.
//!
//! One step applies the joint measurement operator
//! `Ω(V) = exp[Σᵢ −(Γᵢηᵢ/2)(Vᵢ − σ_δᵢ)² dt]`, renormalizes, applies the
//! residual dephasing left by finite efficiency (the components orthogonal to
//! each axis contract at `(1−ηᵢ)Γᵢ`), and finally any spurious coherent
//! rotations. Because `Ω` is a Hermitian exponential in the Pauli algebra the
//! whole update is evaluated in closed form on the Bloch vector.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, sinh, sqrt};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::state::{Bloch, MeasChannel, QubitState};
use crate::transfer::{self, Mat4};

/// `ln(1e-300)`: records less likely than this are rejected.
const LOG_MIN_NORM: f64 = -690.775_527_898_213_7;

/// Largest `Γ·dt` accepted as a weak-measurement step.
pub const MAX_GAMMA_DT: f64 = 0.1;

/// Spurious coherent terms and optional extensions of the effective model.
/// All rates are angular (s⁻¹) and default to zero / disabled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImperfectionParams {
    /// Rotation rate about σz from Rabi-frequency drift.
    pub rabi_detuning_rate: f64,
    /// Per-channel rotation rate about σ_δᵢ from local-oscillator leakage.
    /// Empty means zero for every channel.
    pub lo_leak_rate: Vec<f64>,
    /// Coherent `B` term, a rotation about every channel axis.
    pub coherent_b_rate: f64,
    /// Amplitude damping toward `z = −1` with this lifetime (s).
    pub t1: Option<f64>,
    /// Cavity linewidth for the ring-up transient `1 − e^{−κt/2}`.
    pub ringup_kappa: Option<f64>,
}

impl ImperfectionParams {
    fn validate(&self, n_channels: usize) -> Result<()> {
        if !self.lo_leak_rate.is_empty() && self.lo_leak_rate.len() != n_channels {
            return Err(Error::RecordMismatch(alloc::format!(
                "{} LO leak rates for {} channels",
                self.lo_leak_rate.len(),
                n_channels
            )));
        }
        let finite = self.rabi_detuning_rate.is_finite()
            && self.coherent_b_rate.is_finite()
            && self.lo_leak_rate.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter { name: "imperfection rate", value: f64::NAN });
        }
        if let Some(t1) = self.t1 {
            if !(t1 > 0.0) {
                return Err(Error::InvalidParameter { name: "t1", value: t1 });
            }
        }
        if let Some(k) = self.ringup_kappa {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter { name: "ringup_kappa", value: k });
            }
        }
        Ok(())
    }
}

/// Independent Gaussian increment streams, one per channel.
///
/// Streams are keyed by channel index so that adding or removing another
/// channel never perturbs the noise seen by the first.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    streams: Vec<ChaCha8Rng>,
}

impl NoiseSource {
    pub fn new(seed: u64, n_channels: usize) -> Self {
        let streams = (0..n_channels)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        NoiseSource { streams }
    }

    /// A Wiener increment `dW ~ N(0, dt)` for `channel`.
    pub fn increment(&mut self, channel: usize, dt: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.streams[channel]);
        z * sqrt(dt)
    }
}

/// Precomputed per-step constants for a fixed channel set and step size.
#[derive(Debug, Clone)]
pub struct StepPlan {
    channels: Vec<MeasChannel>,
    axes: Vec<Bloch>,
    dt: f64,
    info: Vec<f64>,
    dephase: [[f64; 3]; 3],
    rotation: Option<[[f64; 3]; 3]>,
    damping: Option<Mat4>,
    ringup_kappa: Option<f64>,
}

struct StepCoefficients<'a> {
    info: alloc::borrow::Cow<'a, [f64]>,
    dephase: alloc::borrow::Cow<'a, [[f64; 3]; 3]>,
}

impl StepPlan {
    pub fn new(channels: &[MeasChannel], dt: f64, imperfections: &ImperfectionParams) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonPositiveDt(dt));
        }
        imperfections.validate(channels.len())?;
        for ch in channels {
            if ch.gamma * dt > MAX_GAMMA_DT {
                return Err(Error::InvalidParameter { name: "gamma*dt", value: ch.gamma * dt });
            }
        }
        let axes: Vec<Bloch> = channels.iter().map(MeasChannel::axis).collect();
        let info = channels.iter().map(|c| c.gamma * c.eta * dt).collect();
        let residual: Vec<(f64, f64)> =
            channels.iter().map(|c| (c.delta, (1.0 - c.eta) * c.gamma)).collect();
        let dephase = transfer::joint_dephasing(&residual, dt);

        let mut omega = Bloch::new(0.0, 0.0, imperfections.rabi_detuning_rate);
        for (i, axis) in axes.iter().enumerate() {
            let leak = imperfections.lo_leak_rate.get(i).copied().unwrap_or(0.0);
            omega = omega + *axis * (leak + imperfections.coherent_b_rate);
        }
        let rate = omega.norm();
        let rotation = (rate > 0.0).then(|| transfer::rotation(&(omega * (1.0 / rate)), rate * dt));
        let damping = imperfections.t1.map(|t1| transfer::amplitude_damping(t1, dt));

        Ok(StepPlan {
            channels: channels.to_vec(),
            axes,
            dt,
            info,
            dephase,
            rotation,
            damping,
            ringup_kappa: imperfections.ringup_kappa,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> &[MeasChannel] {
        &self.channels
    }

    fn coefficients(&self, t_mid: f64) -> StepCoefficients<'_> {
        use alloc::borrow::Cow;
        match self.ringup_kappa {
            None => StepCoefficients { info: Cow::Borrowed(&self.info), dephase: Cow::Borrowed(&self.dephase) },
            Some(kappa) => {
                // Informational rate scales with f², total dephasing with f.
                let f = 1.0 - exp(-0.5 * kappa * t_mid.max(0.0));
                let info =
                    self.channels.iter().map(|c| c.gamma * c.eta * f * f * self.dt).collect();
                let residual: Vec<(f64, f64)> = self
                    .channels
                    .iter()
                    .map(|c| (c.delta, c.gamma * (f - c.eta * f * f)))
                    .collect();
                StepCoefficients {
                    info: Cow::Owned(info),
                    dephase: Cow::Owned(transfer::joint_dephasing(&residual, self.dt)),
                }
            }
        }
    }

    /// One filtering step on a Bloch vector. `t_mid` is the midpoint time of
    /// the step (only used by the ring-up option).
    pub fn step(&self, r: &Bloch, signals: &[f64], t_mid: f64) -> Result<Bloch> {
        let coeffs = self.coefficients(t_mid);
        let mut b = Bloch::ORIGIN;
        let mut log_gauss = 0.0;
        for (i, axis) in self.axes.iter().enumerate() {
            let c = coeffs.info[i];
            if c > 0.0 {
                let v = signals[i];
                b = b + *axis * (c * v);
                log_gauss -= c * (v * v + 1.0);
            }
        }
        let beta = b.norm();
        let (q0, q) = if beta > 0.0 {
            let n = b * (1.0 / beta);
            let nr = n.dot(r);
            let sh2 = sinh(2.0 * beta);
            let s = sinh(beta);
            let cm1 = 2.0 * s * s;
            (1.0 + cm1 + sh2 * nr, *r + n * (sh2 + cm1 * nr))
        } else {
            (1.0, *r)
        };
        let log_norm = log_gauss + log(q0);
        if !(q0 > 0.0) || !(log_norm >= LOG_MIN_NORM) {
            return Err(Error::ImpossibleRecord { log_norm });
        }
        let mut out = transfer::apply3(&coeffs.dephase, &(q * (1.0 / q0)));
        if let Some(rot) = &self.rotation {
            out = transfer::apply3(rot, &out);
        }
        if let Some(d) = &self.damping {
            let q = transfer::apply4(d, &[1.0, out.x, out.y, out.z]);
            out = Bloch::new(q[1], q[2], q[3]);
        }
        Ok(out)
    }

    /// Unnormalized transfer matrix of one step together with the log of the
    /// scalar it omits (Gaussian prefactors included), so that
    /// `exp(log_scale)·[map·(1, r)]₀` is the outcome density of `signals`.
    pub fn step_map(&self, signals: &[f64], t_mid: f64) -> (Mat4, f64) {
        let coeffs = self.coefficients(t_mid);
        let mut b = Bloch::ORIGIN;
        let mut log_scale = 0.0;
        for (i, axis) in self.axes.iter().enumerate() {
            let c = coeffs.info[i];
            if c > 0.0 {
                let v = signals[i];
                b = b + *axis * (c * v);
                log_scale += -c * (v * v + 1.0) + 0.5 * log(c / core::f64::consts::PI);
            }
        }
        let mut map = transfer::exp_sandwich(&b);
        map = transfer::mul4(&transfer::from_bloch_linear(&coeffs.dephase), &map);
        if let Some(rot) = &self.rotation {
            map = transfer::mul4(&transfer::from_bloch_linear(rot), &map);
        }
        if let Some(d) = &self.damping {
            map = transfer::mul4(d, &map);
        }
        (map, log_scale)
    }

    /// Draw signals for one step from state `r` and advance it.
    pub fn generate(
        &self,
        r: &Bloch,
        noise: &mut NoiseSource,
        t_mid: f64,
        signals: &mut [f64],
    ) -> Result<Bloch> {
        let coeffs = self.coefficients(t_mid);
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.eta == 0.0 && ch.gamma > 0.0 && !ch.dephasing_only {
                return Err(Error::ZeroEfficiency { channel: i });
            }
            let mean = self.axes[i].dot(r);
            let c = coeffs.info[i];
            signals[i] = if c > 0.0 {
                // V dt = ⟨σ⟩ dt + dW / √(2Γη)
                let rate = c / self.dt;
                mean + noise.increment(i, self.dt) / (sqrt(2.0 * rate) * self.dt)
            } else {
                mean
            };
        }
        drop(coeffs);
        self.step(r, signals, t_mid)
    }
}

/// Number of steps covering `duration`, rounding partial steps up.
pub fn steps_for(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveDt(dt));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter { name: "duration", value: duration });
    }
    let ratio = duration / dt;
    Ok(libm::ceil(ratio - 1e-9).max(0.0) as usize)
}

/// Normalized measurement signals, one series per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub dt: f64,
    pub channels: Vec<MeasChannel>,
    /// `samples[channel][step]`.
    pub samples: Vec<Vec<f64>>,
    pub seed: Option<u64>,
}

impl MeasurementRecord {
    pub fn empty(dt: f64, channels: &[MeasChannel]) -> Self {
        MeasurementRecord { dt, channels: channels.to_vec(), samples: vec![Vec::new(); channels.len()], seed: None }
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::NonPositiveDt(self.dt));
        }
        if self.samples.len() != self.channels.len() {
            return Err(Error::RecordMismatch(alloc::format!(
                "{} sample series for {} channels",
                self.samples.len(),
                self.channels.len()
            )));
        }
        let n = self.len();
        if self.samples.iter().any(|s| s.len() != n) {
            return Err(Error::RecordMismatch("channels have different lengths".into()));
        }
        for ch in &self.channels {
            MeasChannel::new(ch.delta, ch.gamma, ch.eta)?;
        }
        Ok(())
    }

    /// Signals of all channels at `step`.
    pub fn signals_at(&self, step: usize, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.samples) {
            *o = s[step];
        }
    }

    /// Average consecutive blocks of `factor` samples.
    pub fn decimate(&self, factor: usize) -> Result<MeasurementRecord> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(Error::RecordMismatch(alloc::format!(
                "length {} is not a multiple of {factor}",
                self.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .map(|s| s.chunks(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect())
            .collect();
        Ok(MeasurementRecord { dt: self.dt * factor as f64, channels: self.channels.clone(), samples, seed: self.seed })
    }

    /// Record covering steps `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> MeasurementRecord {
        MeasurementRecord {
            dt: self.dt,
            channels: self.channels.clone(),
            samples: self.samples.iter().map(|s| s[start..end].to_vec()).collect(),
            seed: self.seed,
        }
    }

    /// Time integral `∫ V dt` of one channel.
    pub fn integrated(&self, channel: usize) -> f64 {
        self.samples[channel].iter().sum::<f64>() * self.dt
    }
}

/// Conditional states at uniformly spaced times starting from `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<QubitState>,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |k| k as f64 * self.dt)
    }

    pub fn final_state(&self) -> &QubitState {
        self.states.last().expect("trajectory always holds its initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Apply one measurement step to `state` given the signals of every channel.
pub fn kraus_step(
    state: &QubitState,
    channels: &[MeasChannel],
    signals: &[f64],
    dt: f64,
    imperfections: &ImperfectionParams,
) -> Result<QubitState> {
    if signals.len() != channels.len() {
        return Err(Error::RecordMismatch("signal count differs from channel count".into()));
    }
    let plan = StepPlan::new(channels, dt, imperfections)?;
    let r = plan.step(&state.bloch(), signals, f64::INFINITY)?;
    Ok(QubitState::from_bloch_unchecked(r))
}

/// Draw one step of signals from `state` and return them with the updated state.
pub fn generate_step(
    state: &QubitState,
    channels: &[MeasChannel],
    dt: f64,
    noise: &mut NoiseSource,
) -> Result<(Vec<f64>, QubitState)> {
    let plan = StepPlan::new(channels, dt, &ImperfectionParams::default())?;
    let mut signals = vec![0.0; channels.len()];
    let r = plan.generate(&state.bloch(), noise, f64::INFINITY, &mut signals)?;
    Ok((signals, QubitState::from_bloch_unchecked(r)))
}

/// Simulate `duration` (rounded up to whole steps) from `initial`.
pub fn simulate_trajectory(
    initial: &QubitState,
    channels: &[MeasChannel],
    duration: f64,
    dt: f64,
    seed: u64,
    imperfections: &ImperfectionParams,
) -> Result<(Trajectory, MeasurementRecord)> {
    simulate_decimated(initial, channels, duration, dt, 1, seed, imperfections)
}

/// Simulate at `dt_out / factor` and report states and averaged signals
/// every `dt_out`.
pub fn simulate_decimated(
    initial: &QubitState,
    channels: &[MeasChannel],
    duration: f64,
    dt_out: f64,
    factor: usize,
    seed: u64,
    imperfections: &ImperfectionParams,
) -> Result<(Trajectory, MeasurementRecord)> {
    if factor == 0 {
        return Err(Error::InvalidParameter { name: "decimation", value: 0.0 });
    }
    let n_out = steps_for(duration, dt_out)?;
    let dt = dt_out / factor as f64;
    let plan = StepPlan::new(channels, dt, imperfections)?;
    let mut noise = NoiseSource::new(seed, channels.len());
    let mut r = initial.bloch();
    let mut states = Vec::with_capacity(n_out + 1);
    states.push(*initial);
    let mut samples = vec![Vec::with_capacity(n_out); channels.len()];
    let mut signals = vec![0.0; channels.len()];
    let mut acc = vec![0.0; channels.len()];
    for k in 0..n_out {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..factor {
            let step = k * factor + j;
            let t_mid = (step as f64 + 0.5) * dt;
            r = plan
                .generate(&r, &mut noise, t_mid, &mut signals)
                .map_err(|e| Error::Step { index: step, source: alloc::boxed::Box::new(e) })?;
            for (a, s) in acc.iter_mut().zip(&signals) {
                *a += s;
            }
        }
        for (series, a) in samples.iter_mut().zip(&acc) {
            series.push(a / factor as f64);
        }
        states.push(QubitState::from_bloch_unchecked(r));
    }
    let trajectory = Trajectory { dt: dt_out, states, seed: Some(seed) };
    let record = MeasurementRecord { dt: dt_out, channels: channels.to_vec(), samples, seed: Some(seed) };
    Ok((trajectory, record))
}

/// Replay a record from `initial`.
pub fn filter(
    initial: &QubitState,
    record: &MeasurementRecord,
    imperfections: &ImperfectionParams,
) -> Result<Trajectory> {
    record.validate()?;
    let plan = StepPlan::new(&record.channels, record.dt, imperfections)?;
    let mut r = initial.bloch();
    let mut states = Vec::with_capacity(record.len() + 1);
    states.push(*initial);
    let mut signals = vec![0.0; record.channels.len()];
    for k in 0..record.len() {
        record.signals_at(k, &mut signals);
        let t_mid = (k as f64 + 0.5) * record.dt;
        r = plan
            .step(&r, &signals, t_mid)
            .map_err(|e| Error::Step { index: k, source: alloc::boxed::Box::new(e) })?;
        states.push(QubitState::from_bloch_unchecked(r));
    }
    Ok(Trajectory { dt: record.dt, states, seed: record.seed })
}

/// Final Bloch vector of a fresh trajectory, without storing intermediates.
pub fn run_to_end(plan: &StepPlan, initial: Bloch, n_steps: usize, seed: u64) -> Result<Bloch> {
    let n = plan.channels().len();
    let mut noise = NoiseSource::new(seed, n);
    let mut signals = vec![0.0; n];
    let mut r = initial;
    for k in 0..n_steps {
        r = plan.generate(&r, &mut noise, (k as f64 + 0.5) * plan.dt(), &mut signals)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    const GAMMA: f64 = 2.0 * PI * 122e3;

    fn xy(eta: f64) -> Vec<MeasChannel> {
        vec![
            MeasChannel::new(0.0, GAMMA, eta).unwrap(),
            MeasChannel::new(FRAC_PI_2, GAMMA, eta).unwrap(),
        ]
    }

    #[test]
    fn sigma_x_eigenstate_is_fixed_point() {
        let ch = [MeasChannel::new(0.0, GAMMA, 1.0).unwrap()];
        let plus = QubitState::from_bloch(1.0, 0.0, 0.0).unwrap();
        for v in [-20.0, -3.0, 0.0, 0.7, 15.0] {
            let out = kraus_step(&plus, &ch, &[v], 4e-9, &ImperfectionParams::default()).unwrap();
            assert!(out.bloch().distance(&plus.bloch()) < 1e-14, "v = {v}");
        }
    }

    #[test]
    fn maximally_mixed_is_fixed_under_zero_signal() {
        // Direct 2×2 oracle: Ω(0) = e^{-c/2} I for each channel, so Ω(I/2)Ω† ∝ I/2.
        let mixed = QubitState::maximally_mixed();
        let chans = [
            MeasChannel::new(0.3, GAMMA, 0.41).unwrap(),
            MeasChannel::new(1.9, 0.7 * GAMMA, 0.49).unwrap(),
        ];
        let out = kraus_step(&mixed, &chans, &[0.0, 0.0], 16e-9, &ImperfectionParams::default()).unwrap();
        assert!(out.bloch().norm() < 1e-15);
    }

    #[test]
    fn first_order_increments_from_z_pole() {
        // dx = √(2Γη) dW1, dy = √(2Γη) dW2, dz = −2Γ z dt,
        // with dW_i = (V_i − ⟨σ_i⟩)·√(2ηΓ)·dt.
        let eta = 0.45;
        let dt = 1e-9;
        let pole = QubitState::from_bloch(0.0, 0.0, 1.0).unwrap();
        let (dw1, dw2) = (0.7 * sqrt(dt), -1.3 * sqrt(dt));
        let k = sqrt(2.0 * eta * GAMMA);
        let v1 = dw1 / (k * dt);
        let v2 = dw2 / (k * dt);
        let out = kraus_step(&pole, &xy(eta), &[v1, v2], dt, &ImperfectionParams::default())
            .unwrap()
            .bloch();
        let dx = k * dw1;
        let dy = k * dw2;
        // Realized dz: residual dephasing −2(1−η)Γ dt plus −Γη(dW1² + dW2²)
        // from the measurement; with dW² → dt this averages to −2Γ dt.
        let dz = -2.0 * (1.0 - eta) * GAMMA * dt - eta * GAMMA * (dw1 * dw1 + dw2 * dw2);
        let tol = 10.0 * GAMMA * dt;
        assert!((out.x - dx).abs() < tol * dx.abs(), "x {} vs {}", out.x, dx);
        assert!((out.y - dy).abs() < tol * dy.abs());
        assert!(((out.z - 1.0) - dz).abs() < tol * dz.abs(), "{} vs {}", out.z - 1.0, dz);
        let ito_mean = -2.0 * (1.0 - eta) * GAMMA * dt - eta * GAMMA * 2.0 * dt;
        assert!((ito_mean + 2.0 * GAMMA * dt).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dt_and_impossible_records() {
        let ch = [MeasChannel::new(0.0, GAMMA, 1.0).unwrap()];
        let s = QubitState::maximally_mixed();
        assert!(matches!(
            kraus_step(&s, &ch, &[0.0], 0.0, &ImperfectionParams::default()),
            Err(Error::NonPositiveDt(_))
        ));
        assert!(matches!(
            kraus_step(&s, &ch, &[0.0], -1e-9, &ImperfectionParams::default()),
            Err(Error::NonPositiveDt(_))
        ));
        assert!(matches!(
            kraus_step(&s, &ch, &[1e12], 4e-9, &ImperfectionParams::default()),
            Err(Error::ImpossibleRecord { .. })
        ));
    }

    #[test]
    fn zero_efficiency_channel_cannot_generate() {
        let ch = [MeasChannel::new(0.0, GAMMA, 0.0).unwrap()];
        let mut noise = NoiseSource::new(1, 1);
        let s = QubitState::maximally_mixed();
        assert!(matches!(generate_step(&s, &ch, 4e-9, &mut noise), Err(Error::ZeroEfficiency { .. })));
        let deph = [MeasChannel::dephasing(0.0, GAMMA).unwrap()];
        assert!(generate_step(&s, &deph, 4e-9, &mut noise).is_ok());
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(steps_for(1e-6, 16e-9).unwrap(), 63);
        assert_eq!(steps_for(1e-6, 4e-9).unwrap(), 250);
        assert_eq!(steps_for(0.0, 4e-9).unwrap(), 0);
        let s = QubitState::from_bloch(-1.0, 0.0, 0.0).unwrap();
        let (traj, rec) =
            simulate_trajectory(&s, &xy(0.45), 1e-6, 16e-9, 3, &ImperfectionParams::default()).unwrap();
        assert_eq!(traj.len(), 64);
        assert_eq!(rec.len(), 63);
    }

    #[test]
    fn zero_duration_and_empty_record() {
        let s = QubitState::from_bloch(0.2, 0.1, 0.0).unwrap();
        let (traj, rec) = simulate_trajectory(&s, &xy(0.5), 0.0, 4e-9, 1, &ImperfectionParams::default()).unwrap();
        assert_eq!(traj.states, vec![s]);
        assert!(rec.is_empty());
        let filtered = filter(&s, &MeasurementRecord::empty(4e-9, &xy(0.5)), &ImperfectionParams::default()).unwrap();
        assert_eq!(filtered.states, vec![s]);
    }

    #[test]
    fn filter_reproduces_generator() {
        let s = QubitState::from_bloch(0.0, -1.0, 0.0).unwrap();
        let imp = ImperfectionParams { rabi_detuning_rate: 2.0 * PI * 10e3, ..Default::default() };
        let (traj, rec) = simulate_trajectory(&s, &xy(0.45), 2e-6, 4e-9, 11, &imp).unwrap();
        let back = filter(&s, &rec, &imp).unwrap();
        for (a, b) in traj.states.iter().zip(&back.states) {
            assert!(a.trace_distance(b) < 1e-12);
        }
    }

    #[test]
    fn filter_rejects_mismatched_record() {
        let s = QubitState::maximally_mixed();
        let mut rec = MeasurementRecord::empty(4e-9, &xy(0.5));
        rec.samples[0].push(0.1);
        assert!(matches!(filter(&s, &rec, &ImperfectionParams::default()), Err(Error::RecordMismatch(_))));
    }

    #[test]
    fn decimation_averages_blocks() {
        let ch = [MeasChannel::new(0.0, GAMMA, 0.5).unwrap()];
        let rec = MeasurementRecord {
            dt: 4e-9,
            channels: ch.to_vec(),
            samples: vec![vec![1.0, 3.0, 5.0, 7.0, 0.0, 0.0, 2.0, 2.0]],
            seed: None,
        };
        let d = rec.decimate(4).unwrap();
        assert_eq!(d.samples[0], vec![4.0, 1.0]);
        assert!((d.dt - 16e-9).abs() < 1e-20);
        assert!(rec.decimate(3).is_err());
    }

    #[test]
    fn lo_leak_rotates_about_axis() {
        let ch = [MeasChannel::dephasing(0.0, 0.0).unwrap()];
        let omega = 1e6;
        let imp = ImperfectionParams { lo_leak_rate: vec![omega], ..Default::default() };
        let s = QubitState::from_bloch(0.0, 1.0, 0.0).unwrap();
        let out = kraus_step(&s, &ch, &[0.0], 1e-7, &imp).unwrap().bloch();
        let angle = omega * 1e-7;
        assert!((out.y - libm::cos(angle)).abs() < 1e-12);
        assert!((out.z - libm::sin(angle)).abs() < 1e-12);
    }
}
