//! Voxel-binned tomographic check of filtered final states.
//!
//! Each trajectory ends with one of seven tomography pulses followed by a
//! projective `σz` readout of the true final state. Trajectories are grouped by
//! the voxel of their filtered (predicted) final state, `⟨σx⟩` and `⟨σy⟩` are
//! reconstructed per voxel from the readouts, and the fraction of predictions
//! lying within one standard error of the reconstruction is tested against the
//! Gaussian coverage `0.6827`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, floor, lgamma, sqrt};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{filter, simulate_trajectory, ImperfectionParams};
use crate::ensemble::{trajectory_seed, try_par_map};
use crate::error::{Error, Result};
use crate::state::{Bloch, MeasChannel, QubitState};

/// Coverage of a one-standard-error interval for a Gaussian estimate.
pub const ONE_SIGMA_COVERAGE: f64 = 0.682_689_492_137_086;

const READOUT_STREAM: u64 = 0x7F4A_7C15_9E37_79B9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TomoPulse {
    Identity,
    XHalf,
    XHalfNeg,
    YHalf,
    YHalfNeg,
    XPi,
    XPiNeg,
}

impl TomoPulse {
    pub const ALL: [TomoPulse; 7] = [
        TomoPulse::Identity,
        TomoPulse::XHalf,
        TomoPulse::XHalfNeg,
        TomoPulse::YHalf,
        TomoPulse::YHalfNeg,
        TomoPulse::XPi,
        TomoPulse::XPiNeg,
    ];

    fn rotation(self) -> (Bloch, f64) {
        use core::f64::consts::{FRAC_PI_2, PI};
        let x = Bloch::new(1.0, 0.0, 0.0);
        let y = Bloch::new(0.0, 1.0, 0.0);
        match self {
            TomoPulse::Identity => (x, 0.0),
            TomoPulse::XHalf => (x, FRAC_PI_2),
            TomoPulse::XHalfNeg => (x, -FRAC_PI_2),
            TomoPulse::YHalf => (y, FRAC_PI_2),
            TomoPulse::YHalfNeg => (y, -FRAC_PI_2),
            TomoPulse::XPi => (x, PI),
            TomoPulse::XPiNeg => (x, -PI),
        }
    }

    /// `z` after the pulse.
    pub fn readout_axis_value(self, r: &Bloch) -> f64 {
        let (axis, angle) = self.rotation();
        r.rotate_about(&axis, angle).z
    }

    /// Bloch component (0 = x, 1 = y, 2 = z) and sign measured by the readout.
    pub fn component(self) -> (usize, f64) {
        match self {
            TomoPulse::Identity => (2, 1.0),
            TomoPulse::XHalf => (1, 1.0),
            TomoPulse::XHalfNeg => (1, -1.0),
            TomoPulse::YHalf => (0, -1.0),
            TomoPulse::YHalfNeg => (0, 1.0),
            TomoPulse::XPi | TomoPulse::XPiNeg => (2, -1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TomoPulse::Identity => "I",
            TomoPulse::XHalf => "x90",
            TomoPulse::XHalfNeg => "-x90",
            TomoPulse::YHalf => "y90",
            TomoPulse::YHalfNeg => "-y90",
            TomoPulse::XPi => "x180",
            TomoPulse::XPiNeg => "-x180",
        }
    }
}

/// One trajectory's filtered prediction and its tomography outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomoSample {
    pub predicted: Bloch,
    pub pulse: TomoPulse,
    /// `true` for the `+1` eigenvalue of `σz`.
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomoSimulation {
    pub initial: Bloch,
    /// Channels generating the records.
    pub channels: Vec<MeasChannel>,
    /// Channels assumed by the filter; differs from `channels` to model
    /// miscalibration.
    pub filter_channels: Vec<MeasChannel>,
    pub duration: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Probability that the readout reports the correct eigenvalue.
    pub readout_fidelity: f64,
}

/// Simulate trajectories, filter their records and draw tomography outcomes.
/// Pulses cycle through [`TomoPulse::ALL`] by trajectory index.
pub fn simulate_tomography(sim: &TomoSimulation) -> Result<Vec<TomoSample>> {
    if !(0.5..=1.0).contains(&sim.readout_fidelity) {
        return Err(Error::InvalidParameter { name: "readout_fidelity", value: sim.readout_fidelity });
    }
    if sim.filter_channels.len() != sim.channels.len() {
        return Err(Error::RecordMismatch("filter channel count differs".into()));
    }
    let initial = QubitState::from_vector(sim.initial)?;
    let none = ImperfectionParams::default();
    try_par_map(sim.n_traj, |i| {
        let seed = trajectory_seed(sim.seed, i as u64);
        let (traj, mut record) = simulate_trajectory(&initial, &sim.channels, sim.duration, sim.dt, seed, &none)?;
        let truth = traj.final_state().bloch();
        record.channels.clone_from(&sim.filter_channels);
        let predicted = filter(&initial, &record, &none)?.final_state().bloch();
        let pulse = TomoPulse::ALL[i % TomoPulse::ALL.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(READOUT_STREAM);
        let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let up = u() < 0.5 * (1.0 + pulse.readout_axis_value(&truth));
        let outcome = if u() < sim.readout_fidelity { up } else { !up };
        Ok(TomoSample { predicted, pulse, outcome })
    })
}

/// Reconstruction of one Bloch component in one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomoRow {
    pub voxel: [usize; 3],
    pub component: usize,
    pub predicted: f64,
    pub measured: f64,
    pub err: f64,
    pub count: usize,
}

impl TomoRow {
    pub fn within(&self) -> bool {
        fabs(self.predicted - self.measured) <= self.err
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomoComparison {
    pub n_voxels: usize,
    pub rows: Vec<TomoRow>,
    /// Occupied voxel components skipped for having fewer than the minimum
    /// number of readouts.
    pub flagged: usize,
}

fn voxel_index(c: f64, n: usize) -> usize {
    (floor((c + 1.0) * 0.5 * n as f64).max(0.0) as usize).min(n - 1)
}

/// Group samples by predicted voxel on an `n³` grid over `[−1, 1]³` and
/// reconstruct `⟨σx⟩` and `⟨σy⟩` where at least `min_count` readouts exist.
pub fn tomo_validate(samples: &[TomoSample], n_voxels: usize, min_count: usize) -> Result<TomoComparison> {
    if n_voxels == 0 {
        return Err(Error::InvalidParameter { name: "n_voxels", value: 0.0 });
    }
    let n = n_voxels;
    #[derive(Clone, Default)]
    struct Acc {
        pred: [f64; 2],
        members: usize,
        ups: [usize; 2],
        counts: [usize; 2],
    }
    let mut acc = vec![Acc::default(); n * n * n];
    for s in samples {
        let p = s.predicted;
        let idx = (voxel_index(p.x, n) * n + voxel_index(p.y, n)) * n + voxel_index(p.z, n);
        let a = &mut acc[idx];
        a.pred[0] += p.x;
        a.pred[1] += p.y;
        a.members += 1;
        let (comp, sign) = s.pulse.component();
        if comp < 2 {
            a.counts[comp] += 1;
            // Count outcomes as +1 for the component's positive eigenvalue.
            if s.outcome == (sign > 0.0) {
                a.ups[comp] += 1;
            }
        }
    }
    let mut rows = Vec::new();
    let mut flagged = 0;
    for (idx, a) in acc.iter().enumerate() {
        if a.members == 0 {
            continue;
        }
        for comp in 0..2 {
            let count = a.counts[comp];
            if count < min_count.max(1) {
                flagged += 1;
                continue;
            }
            let k = a.ups[comp] as f64;
            let m = count as f64;
            let measured = 2.0 * k / m - 1.0;
            let q = (k + 0.5) / (m + 1.0);
            rows.push(TomoRow {
                voxel: [idx / (n * n), (idx / n) % n, idx % n],
                component: comp,
                predicted: a.pred[comp] / a.members as f64,
                measured,
                err: 2.0 * sqrt(q * (1.0 - q) / m),
                count,
            });
        }
    }
    Ok(TomoComparison { n_voxels: n, rows, flagged })
}

/// Exact two-sided binomial test of the within-error-bar count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialTest {
    pub within: usize,
    pub total: usize,
    pub fraction: f64,
    pub expected: f64,
    pub p_value: f64,
    pub pass: bool,
}

fn log_pmf(k: usize, n: usize, p: f64) -> f64 {
    let (k, n) = (k as f64, n as f64);
    lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0) + k * libm::log(p) + (n - k) * libm::log1p(-p)
}

/// Two-sided exact binomial p-value: total probability of outcomes no more
/// likely than `k`.
pub fn binomial_two_sided(k: usize, n: usize, p: f64) -> f64 {
    let lk = log_pmf(k, n, p);
    let total: f64 = (0..=n).map(|j| log_pmf(j, n, p)).filter(|&l| l <= lk + 1e-7).map(libm::exp).sum();
    total.min(1.0)
}

impl TomoComparison {
    pub fn within_count(&self) -> usize {
        self.rows.iter().filter(|r| r.within()).count()
    }

    pub fn fraction_within(&self) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.within_count() as f64 / self.rows.len() as f64
    }

    /// Test the within-error-bar count against coverage `p0` at `level`.
    pub fn binomial_test(&self, p0: f64, level: f64) -> BinomialTest {
        let within = self.within_count();
        let total = self.rows.len();
        let p_value = if total == 0 { 1.0 } else { binomial_two_sided(within, total, p0) };
        BinomialTest {
            within,
            total,
            fraction: self.fraction_within(),
            expected: p0,
            p_value,
            pass: total > 0 && p_value >= 1.0 - level,
        }
    }
}
