//! Monte Carlo propagation: histograms of independent trajectories.

use alloc::vec;
use alloc::vec::Vec;

use libm::round;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardUniform};

use super::pde::{PolarDensity, PolarGrid};
use super::{BlochDistribution, Grid};
use crate::engine::{ImperfectionParams, NoiseSource, StepPlan};
use crate::ensemble::{par_map, par_reduce, trajectory_seed};
use crate::error::{Error, Result};
use crate::state::{Bloch, MeasChannel};

/// Trajectories per histogram chunk.
const CHUNK: usize = 512;

/// Minimum ensemble for histogram outputs.
pub const MIN_TRAJECTORIES: usize = 1000;

/// Where trajectories start.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    Point(Bloch),
    /// Cell masses of a polar density, sampled uniformly inside each cell.
    Cells { grid: PolarGrid, cdf: Vec<f64> },
}

impl InitialCondition {
    pub fn density(d: &PolarDensity) -> Self {
        let masses = d.cell_masses();
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in masses {
            acc += m.max(0.0);
            cdf.push(acc);
        }
        InitialCondition::Cells { grid: d.grid, cdf }
    }

    fn sample(&self, seed: u64) -> Bloch {
        match self {
            InitialCondition::Point(b) => *b,
            InitialCondition::Cells { grid, cdf } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                let u: f64 = StandardUniform.sample(&mut rng);
                let target = u * cdf[cdf.len() - 1];
                let cell = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
                let a: f64 = StandardUniform.sample(&mut rng);
                let b: f64 = StandardUniform.sample(&mut rng);
                grid.point_in_cell(cell, a, b)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub imperfections: ImperfectionParams,
}

/// Step index of every requested time, checking they are multiples of `dt`.
fn checkpoints(times: &[f64], dt: f64) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let k = round(t / dt);
        if !(t >= 0.0) || libm::fabs(k * dt - t) > 1e-9 * dt.max(t) {
            return Err(Error::NotMultipleOfDt { time: t, dt });
        }
        out.push((k as usize, ti));
    }
    out.sort_unstable();
    Ok(out)
}

fn run_one(
    plan: &StepPlan,
    initial: &InitialCondition,
    seed: u64,
    order: &[(usize, usize)],
    mut record: impl FnMut(usize, Bloch),
) -> Result<()> {
    let n = plan.channels().len();
    let mut noise = NoiseSource::new(seed, n);
    let mut signals = vec![0.0; n];
    let mut r = initial.sample(seed);
    let mut step = 0;
    for &(k, ti) in order {
        while step < k {
            r = plan.generate(&r, &mut noise, (step as f64 + 0.5) * plan.dt(), &mut signals)?;
            step += 1;
        }
        record(ti, r);
    }
    Ok(())
}

/// Bloch vectors of every trajectory at every requested time, `[time][trajectory]`.
pub fn sample_ensemble(
    initial: &InitialCondition,
    channels: &[MeasChannel],
    times: &[f64],
    config: &McConfig,
) -> Result<Vec<Vec<Bloch>>> {
    let order = checkpoints(times, config.dt)?;
    let plan = StepPlan::new(channels, config.dt, &config.imperfections)?;
    let per_traj = par_map(config.n_traj, |i| {
        let mut states = vec![Bloch::ORIGIN; times.len()];
        run_one(&plan, initial, trajectory_seed(config.seed, i as u64), &order, |ti, r| states[ti] = r)
            .map(|_| states)
    });
    let mut out = vec![Vec::with_capacity(config.n_traj); times.len()];
    for states in per_traj {
        for (ti, r) in states?.into_iter().enumerate() {
            out[ti].push(r);
        }
    }
    Ok(out)
}

/// Histograms of the trajectory ensemble at each requested time.
pub fn propagate_mc(
    initial: &InitialCondition,
    channels: &[MeasChannel],
    times: &[f64],
    config: &McConfig,
    grid: Grid,
) -> Result<Vec<BlochDistribution>> {
    if config.n_traj < MIN_TRAJECTORIES {
        return Err(Error::InsufficientData(alloc::format!(
            "{} trajectories, at least {MIN_TRAJECTORIES} required",
            config.n_traj
        )));
    }
    let order = checkpoints(times, config.dt)?;
    let plan = StepPlan::new(channels, config.dt, &config.imperfections)?;
    let n_chunks = config.n_traj.div_ceil(CHUNK);
    let counts = par_reduce(
        n_chunks,
        |c| -> Result<Vec<Vec<u64>>> {
            let mut counts = vec![vec![0u64; grid.len()]; times.len()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(config.n_traj) {
                run_one(&plan, initial, trajectory_seed(config.seed, i as u64), &order, |ti, r| {
                    counts[ti][grid.index(r.x, r.y, r.z)] += 1
                })?;
            }
            Ok(counts)
        },
        |a, b| {
            let (mut a, b) = (a?, b?);
            for (x, y) in a.iter_mut().zip(b) {
                for (u, v) in x.iter_mut().zip(y) {
                    *u += v;
                }
            }
            Ok(a)
        },
    )
    .expect("at least one chunk")?;
    times
        .iter()
        .zip(&counts)
        .map(|(&t, c)| BlochDistribution::from_counts(grid, c, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    const GAMMA: f64 = 2.0 * PI * 122e3;

    fn config(n: usize) -> McConfig {
        McConfig { dt: 4e-9, n_traj: n, seed: 5, imperfections: ImperfectionParams::default() }
    }

    #[test]
    fn rejects_times_off_the_step_grid() {
        let ch = [MeasChannel::new(0.0, GAMMA, 0.5).unwrap()];
        let r = sample_ensemble(&InitialCondition::Point(Bloch::ORIGIN), &ch, &[1e-9], &config(10));
        assert!(matches!(r, Err(Error::NotMultipleOfDt { .. })));
        let r = propagate_mc(&InitialCondition::Point(Bloch::ORIGIN), &ch, &[0.0], &config(10), Grid::Planar { n: 11 });
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn histograms_are_normalized_and_match_samples() {
        let ch = [MeasChannel::new(0.0, GAMMA, 0.45).unwrap(), MeasChannel::new(FRAC_PI_2, GAMMA, 0.45).unwrap()];
        let init = InitialCondition::Point(Bloch::ORIGIN);
        let times = [0.0, 2e-7, 4e-7];
        let grid = Grid::Planar { n: 21 };
        let hist = propagate_mc(&init, &ch, &times, &config(1500), grid).unwrap();
        let samples = sample_ensemble(&init, &ch, &times, &config(1500)).unwrap();
        for (h, s) in hist.iter().zip(&samples) {
            assert!((h.mass() - 1.0).abs() < 1e-12);
            let mut counts = vec![0u64; grid.len()];
            for r in s {
                counts[grid.index(r.x, r.y, r.z)] += 1;
            }
            assert_eq!(*h, BlochDistribution::from_counts(grid, &counts, h.time).unwrap());
        }
    }
}
