//! Composite record maps and maximum-likelihood estimation of the state a
//! record ensemble started from.
//!
//! The likelihood of a record given `ρ₀` is `Tr[E(ρ₀)]`, the trace of the
//! record's composite map. It is affine in the Bloch vector, so the summed log
//! likelihood over many records is concave on the ball.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, log, sqrt};

use crate::engine::{ImperfectionParams, MeasurementRecord, StepPlan};
use crate::ensemble::{pairwise_sum, par_map};
use crate::error::{Error, Result};
use crate::state::{Bloch, QubitState, PSD_TOLERANCE};
use crate::transfer::{self, Mat4, IDENTITY4};

/// Half the 95% quantile of χ² with three degrees of freedom.
pub const CONFIDENCE_DELTA_LOGLIK: f64 = 7.814_727_903_251_178 / 2.0;

const MAX_ITERATIONS: usize = 10_000;

/// Unnormalized completely positive map `exp(log_scale)·matrix` in Pauli
/// transfer form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMap {
    pub matrix: Mat4,
    pub log_scale: f64,
}

impl TransferMap {
    pub fn identity() -> Self {
        TransferMap { matrix: IDENTITY4, log_scale: 0.0 }
    }

    /// `later ∘ self`.
    pub fn then(&self, later: &TransferMap) -> Result<TransferMap> {
        let mut out = TransferMap {
            matrix: transfer::mul4(&later.matrix, &self.matrix),
            log_scale: self.log_scale + later.log_scale,
        };
        out.rescale()?;
        Ok(out)
    }

    /// Move the largest entry's magnitude into `log_scale`.
    fn rescale(&mut self) -> Result<()> {
        let peak = self.matrix.iter().flatten().map(|v| fabs(*v)).fold(0.0, f64::max);
        if !(peak > 0.0) || !peak.is_finite() || !self.log_scale.is_finite() {
            return Err(Error::Underflow);
        }
        for v in self.matrix.iter_mut().flatten() {
            *v /= peak;
        }
        self.log_scale += log(peak);
        Ok(())
    }

    /// Affine likelihood coefficients: `Tr[E(ρ)] ∝ c₀ + c·r`.
    pub fn trace_row(&self) -> [f64; 4] {
        self.matrix[0]
    }

    /// Output state `E(ρ)/Tr[E(ρ)]`.
    pub fn normalized_output(&self, state: &QubitState) -> Result<QubitState> {
        let r = state.bloch();
        let q = transfer::apply4(&self.matrix, &[1.0, r.x, r.y, r.z]);
        if !(q[0] > 0.0) {
            return Err(Error::NonPositiveProbability(q[0]));
        }
        QubitState::from_bloch(q[1] / q[0], q[2] / q[0], q[3] / q[0])
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        transfer::choi_min_eigenvalue(&self.matrix)
    }

    /// Sixteen row-major entries followed by `log_scale`.
    pub fn to_row(&self) -> [f64; 17] {
        let mut row = [0.0; 17];
        for (i, v) in self.matrix.iter().flatten().enumerate() {
            row[i] = *v;
        }
        row[16] = self.log_scale;
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 17 {
            return Err(Error::InvalidState(alloc::format!("transfer map row has {} values", row.len())));
        }
        let mut matrix = [[0.0; 4]; 4];
        for i in 0..16 {
            matrix[i / 4][i % 4] = row[i];
        }
        Ok(TransferMap { matrix, log_scale: row[16] })
    }
}

/// Composite map of a whole record, Gaussian outcome prefactors included.
pub fn composite_map(record: &MeasurementRecord, imperfections: &ImperfectionParams) -> Result<TransferMap> {
    record.validate()?;
    if record.is_empty() {
        return Ok(TransferMap::identity());
    }
    let plan = StepPlan::new(&record.channels, record.dt, imperfections)?;
    let mut acc = TransferMap::identity();
    let mut signals = vec![0.0; record.channels.len()];
    for k in 0..record.len() {
        record.signals_at(k, &mut signals);
        let (matrix, log_scale) = plan.step_map(&signals, (k as f64 + 0.5) * record.dt);
        acc = acc.then(&TransferMap { matrix, log_scale })?;
    }
    Ok(acc)
}

/// `log Tr[E(ρ₀)]` including the stored scale.
pub fn likelihood(map: &TransferMap, rho0: &QubitState) -> Result<f64> {
    let c = map.trace_row();
    let r = rho0.bloch();
    let p = c[0] + c[1] * r.x + c[2] * r.y + c[3] * r.z;
    let scale = c.iter().map(|v| fabs(*v)).fold(0.0, f64::max);
    if p < -PSD_TOLERANCE * scale.max(1.0) {
        return Err(Error::NonPositiveProbability(p));
    }
    if !(p > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log(p) + map.log_scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodResult {
    pub mle: Bloch,
    pub log_likelihood: f64,
    /// Grid points on the edge of the 95% likelihood-ratio region.
    pub region_boundary: Vec<Bloch>,
    pub iterations: usize,
    /// Likelihood does not depend on the state at all.
    pub degenerate: bool,
    pub n_records: usize,
}

/// Summed log likelihood `Σ log(a_k·(1, r))` over normalized coefficient rows.
#[derive(Debug, Clone)]
pub struct LogLikelihood {
    rows: Vec<[f64; 4]>,
    offset: f64,
}

impl LogLikelihood {
    pub fn new(maps: &[TransferMap]) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::NoMaps);
        }
        let mut offsets = Vec::with_capacity(maps.len());
        let rows = maps
            .iter()
            .map(|m| {
                let c = m.trace_row();
                if !(c[0] > 0.0) {
                    return Err(Error::NonPositiveProbability(c[0]));
                }
                offsets.push(log(c[0]) + m.log_scale);
                Ok([1.0, c[1] / c[0], c[2] / c[0], c[3] / c[0]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LogLikelihood { rows, offset: pairwise_sum(&offsets) })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn value(&self, r: &Bloch) -> f64 {
        let terms: Vec<f64> = self.rows.iter().map(|a| log(a[0] + a[1] * r.x + a[2] * r.y + a[3] * r.z)).collect();
        pairwise_sum(&terms) + self.offset
    }

    /// Value and gradient; `None` where some argument is non-positive.
    fn value_gradient(&self, r: &Bloch) -> Option<(f64, Bloch)> {
        let mut g = Bloch::ORIGIN;
        let mut terms = Vec::with_capacity(self.rows.len());
        for a in &self.rows {
            let p = a[0] + a[1] * r.x + a[2] * r.y + a[3] * r.z;
            if !(p > 0.0) {
                return None;
            }
            terms.push(log(p));
            g = g + Bloch::new(a[1], a[2], a[3]) * (1.0 / p);
        }
        Some((pairwise_sum(&terms) + self.offset, g))
    }

    fn is_flat(&self) -> bool {
        self.rows.iter().all(|a| fabs(a[1]) + fabs(a[2]) + fabs(a[3]) < 1e-14)
    }
}

fn project_to_ball(r: Bloch) -> Bloch {
    let n = r.norm();
    if n > 1.0 {
        r * (1.0 / n)
    } else {
        r
    }
}

/// Maximize the summed log likelihood over the closed Bloch ball.
pub fn mle_initial_state(maps: &[TransferMap]) -> Result<LikelihoodResult> {
    mle_with_grid(maps, 61)
}

/// As [`mle_initial_state`] with an `n³` grid for the confidence region.
pub fn mle_with_grid(maps: &[TransferMap], grid: usize) -> Result<LikelihoodResult> {
    let ll = LogLikelihood::new(maps)?;
    if ll.is_flat() {
        return Ok(LikelihoodResult {
            mle: Bloch::ORIGIN,
            log_likelihood: ll.value(&Bloch::ORIGIN),
            region_boundary: Vec::new(),
            iterations: 0,
            degenerate: true,
            n_records: maps.len(),
        });
    }
    let (mle, value, iterations) = ascend(&ll)?;
    let region_boundary = confidence_boundary(&ll, value, grid);
    Ok(LikelihoodResult { mle, log_likelihood: value, region_boundary, iterations, degenerate: false, n_records: maps.len() })
}

/// Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking.
fn ascend(ll: &LogLikelihood) -> Result<(Bloch, f64, usize)> {
    let mut r = Bloch::ORIGIN;
    let (mut f, mut g) = ll.value_gradient(&r).ok_or(Error::NonPositiveProbability(0.0))?;
    let mut step = 1.0 / (g.norm() * sqrt(ll.len() as f64)).max(1e-300);
    for it in 0..MAX_ITERATIONS {
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = project_to_ball(r + g * t);
            if let Some((fc, gc)) = ll.value_gradient(&cand) {
                let moved = cand - r;
                if fc >= f + 1e-4 * g.dot(&moved) {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            return Ok((r, f, it));
        };
        let s = cand - r;
        let y = gc - g;
        let moved = s.norm();
        r = cand;
        let improvement = fc - f;
        f = fc;
        g = gc;
        if moved < 1e-12 || improvement.abs() < 1e-13 * f.abs().max(1.0) {
            return Ok((r, f, it + 1));
        }
        let sy = s.dot(&y);
        step = if sy < 0.0 { s.norm_sqr() / -sy } else { t * 2.0 };
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS })
}

fn grid_coordinate(i: usize, n: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (n - 1) as f64
}

/// Grid points of the ball inside the likelihood-ratio region that have at
/// least one neighbour outside it.
fn confidence_boundary(ll: &LogLikelihood, max_value: f64, n: usize) -> Vec<Bloch> {
    let threshold = max_value - CONFIDENCE_DELTA_LOGLIK;
    let inside_ball = |i: usize, j: usize, k: usize| {
        Bloch::new(grid_coordinate(i, n), grid_coordinate(j, n), grid_coordinate(k, n)).norm() <= 1.0 + 1e-12
    };
    let planes: Vec<Vec<bool>> = par_map(n, |i| {
        let mut plane = vec![false; n * n];
        for j in 0..n {
            for k in 0..n {
                if inside_ball(i, j, k) {
                    let p = Bloch::new(grid_coordinate(i, n), grid_coordinate(j, n), grid_coordinate(k, n));
                    plane[j * n + k] = ll.value(&p) >= threshold;
                }
            }
        }
        plane
    });
    let member = |i: isize, j: isize, k: isize| {
        if i < 0 || j < 0 || k < 0 || i >= n as isize || j >= n as isize || k >= n as isize {
            return false;
        }
        planes[i as usize][j as usize * n + k as usize]
    };
    let mut out = Vec::new();
    for i in 0..n as isize {
        for j in 0..n as isize {
            for k in 0..n as isize {
                if !member(i, j, k) {
                    continue;
                }
                let edge = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                    .iter()
                    .any(|(a, b, c)| !member(i + a, j + b, k + c));
                if edge {
                    out.push(Bloch::new(
                        grid_coordinate(i as usize, n),
                        grid_coordinate(j as usize, n),
                        grid_coordinate(k as usize, n),
                    ));
                }
            }
        }
    }
    out
}

impl LikelihoodResult {
    /// Whether `r` lies in the 95% likelihood-ratio region of `maps`.
    pub fn region_contains(&self, maps: &[TransferMap], r: &Bloch) -> Result<bool> {
        if self.degenerate {
            return Ok(r.norm() <= 1.0 + 1e-9);
        }
        let ll = LogLikelihood::new(maps)?;
        Ok(ll.value(r) >= self.log_likelihood - CONFIDENCE_DELTA_LOGLIK)
    }
}

/// Exhaustive grid maximization, used as an independent check on the ascent.
pub fn grid_argmax(maps: &[TransferMap], n: usize) -> Result<Bloch> {
    let ll = LogLikelihood::new(maps)?;
    let best: Vec<(f64, Bloch)> = par_map(n, |i| {
        let mut best = (f64::NEG_INFINITY, Bloch::ORIGIN);
        for j in 0..n {
            for k in 0..n {
                let p = Bloch::new(grid_coordinate(i, n), grid_coordinate(j, n), grid_coordinate(k, n));
                if p.norm() <= 1.0 + 1e-12 {
                    let v = ll.value(&p);
                    if v > best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        best
    });
    Ok(best.into_iter().fold((f64::NEG_INFINITY, Bloch::ORIGIN), |a, b| if b.0 > a.0 { b } else { a }).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::MeasChannel;
    use core::f64::consts::PI;

    const GAMMA: f64 = 2.0 * PI * 122e3;

    #[test]
    fn empty_record_gives_identity() {
        let ch = [MeasChannel::new(0.0, GAMMA, 0.5).unwrap()];
        let m = composite_map(&MeasurementRecord::empty(16e-9, &ch), &ImperfectionParams::default()).unwrap();
        assert_eq!(m, TransferMap::identity());
        let s = QubitState::from_bloch(0.3, 0.1, 0.0).unwrap();
        assert_eq!(likelihood(&m, &s).unwrap(), 0.0);
    }

    #[test]
    fn single_step_likelihood_ratio() {
        // Oracle: p(v|±x) ∝ exp[−Γη(v ∓ 1)² dt] for the pure Kraus part; the
        // ratio is exp(4Γη v dt).
        let (eta, dt, v) = (0.41, 16e-9, 1.7);
        let ch = [MeasChannel::new(0.0, GAMMA, eta).unwrap()];
        let rec = MeasurementRecord { dt, channels: ch.to_vec(), samples: vec![vec![v]], seed: None };
        let m = composite_map(&rec, &ImperfectionParams::default()).unwrap();
        let plus = QubitState::from_bloch(1.0, 0.0, 0.0).unwrap();
        let minus = QubitState::from_bloch(-1.0, 0.0, 0.0).unwrap();
        let ratio = likelihood(&m, &plus).unwrap() - likelihood(&m, &minus).unwrap();
        let expected = -GAMMA * eta * dt * ((v - 1.0) * (v - 1.0) - (v + 1.0) * (v + 1.0));
        assert!((ratio - expected).abs() < 1e-12);
        assert!((ratio - 4.0 * GAMMA * eta * v * dt).abs() < 1e-12);
    }

    #[test]
    fn single_step_density_is_gaussian() {
        // From an eigenstate the outcome density is exactly N(±1, 1/(2Γη dt)).
        let (eta, dt, v) = (0.6, 10e-9, -0.4);
        let ch = [MeasChannel::new(0.0, GAMMA, eta).unwrap()];
        let rec = MeasurementRecord { dt, channels: ch.to_vec(), samples: vec![vec![v]], seed: None };
        let m = composite_map(&rec, &ImperfectionParams::default()).unwrap();
        let var = 1.0 / (2.0 * GAMMA * eta * dt);
        let expected = -0.5 * log(2.0 * PI * var) - (v - 1.0) * (v - 1.0) / (2.0 * var);
        let plus = QubitState::from_bloch(1.0, 0.0, 0.0).unwrap();
        assert!((likelihood(&m, &plus).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn map_row_roundtrip() {
        let mut m = TransferMap::identity();
        m.matrix[2][3] = 0.25;
        m.log_scale = -3.5;
        assert_eq!(TransferMap::from_row(&m.to_row()).unwrap(), m);
        assert!(TransferMap::from_row(&[0.0; 5]).is_err());
    }

    #[test]
    fn identity_maps_are_degenerate() {
        let r = mle_initial_state(&[TransferMap::identity()]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.mle, Bloch::ORIGIN);
        assert!(matches!(mle_initial_state(&[]), Err(Error::NoMaps)));
    }

    #[test]
    fn ascent_matches_closed_form_two_outcomes() {
        // d/dx [3 log(1 + x/2) + 2 log(1 − x/2)] = 0 at x = 0.4.
        let mut maps = Vec::new();
        for (sign, count) in [(1.0, 3), (-1.0, 2)] {
            let mut m = TransferMap::identity();
            m.matrix[0] = [1.0, 0.5 * sign, 0.0, 0.0];
            maps.extend(core::iter::repeat_n(m, count));
        }
        let r = mle_with_grid(&maps, 21).unwrap();
        assert!((r.mle.x - 0.4).abs() < 1e-6, "{:?}", r.mle);
        assert!(r.mle.y.abs() < 1e-9 && r.mle.z.abs() < 1e-9);
        assert!(r.region_contains(&maps, &r.mle).unwrap());
    }
}
