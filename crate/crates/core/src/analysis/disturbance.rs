//! Measurement-induced disturbance `Tr[dρ†dρ]` and the uncertainty bound.
//!
//! For the two-channel stochastic master equation the innovation part of
//! `dρ` is `Σᵢ √(Γᵢηᵢ/2) H[σ_δᵢ]ρ dWᵢ`, and `H[σ]ρ` has Bloch vector
//! `2(n − s r)` with `s = n·r`. Its Itô mean square gives
//! `Σᵢ Γᵢηᵢ (1 − 2sᵢ² + sᵢ²|r|²) dt`, which reduces to `Σᵢ Δσ_δᵢ² Γᵢηᵢ dt` on
//! the sphere. The deterministic part only enters at `O(dt²)`.

use alloc::vec::Vec;

use libm::{cos, fabs, sin, sqrt};

use crate::state::{Bloch, MeasChannel, QubitState};

/// Ensemble-mean `Tr[dρ†dρ]` over one interval `dt`.
pub fn disturbance_at(state: &QubitState, channels: &[MeasChannel], dt: f64) -> f64 {
    disturbance_bloch(&state.bloch(), channels, dt)
}

pub(crate) fn disturbance_bloch(r: &Bloch, channels: &[MeasChannel], dt: f64) -> f64 {
    let r2 = r.norm_sqr();
    let total: f64 = channels
        .iter()
        .map(|c| {
            let s = c.axis().dot(r);
            c.measurement_rate() * (1.0 - 2.0 * s * s + s * s * r2).max(0.0)
        })
        .sum();
    total * dt
}

/// `Σᵢ (1 − ⟨σ_δᵢ⟩²) Γᵢηᵢ dt`, the pure-state form of the disturbance.
pub fn variance_form(state: &QubitState, channels: &[MeasChannel], dt: f64) -> f64 {
    let r = state.bloch();
    channels
        .iter()
        .map(|c| {
            let s = c.axis().dot(&r);
            (1.0 - s * s) * c.measurement_rate()
        })
        .sum::<f64>()
        * dt
}

/// Right-hand side of the uncertainty bound for the first two channels,
/// `|⟨[σ_δ₁, σ_δ₂]⟩| √(η₁η₂Γ₁Γ₂) dt`. Zero with fewer than two channels.
pub fn commutator_bound(state: &QubitState, channels: &[MeasChannel], dt: f64) -> f64 {
    let [a, b] = match channels {
        [a, b, ..] => [a, b],
        _ => return 0.0,
    };
    // [n₁·σ, n₂·σ] = 2i (n₁×n₂)·σ
    let comm = 2.0 * fabs(a.axis().cross(&b.axis()).dot(&state.bloch()));
    comm * sqrt(a.measurement_rate() * b.measurement_rate()) * dt
}

/// Points at which a disturbance field is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceGrid {
    /// Latitude-longitude grid on the unit sphere. Latitudes include both
    /// poles and, for odd `n_theta`, the equator; longitudes start at the
    /// first channel's axis so that its eigenstates are grid points.
    Sphere { n_theta: usize, n_phi: usize },
    /// `n × n` points over `[−1, 1]²` at `z = 0`, keeping those in the disk.
    Disk { n: usize },
    /// `n³` points over `[−1, 1]³`, keeping those in the ball.
    Ball { n: usize },
}

/// Disturbance values at a set of Bloch points for a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceField {
    pub points: Vec<Bloch>,
    pub values: Vec<f64>,
    pub dt: f64,
    pub channels: Vec<MeasChannel>,
}

fn axis_points(n: usize) -> impl Iterator<Item = f64> + Clone {
    let step = if n > 1 { 2.0 / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if n > 1 { -1.0 + i as f64 * step } else { 0.0 })
}

impl DisturbanceGrid {
    pub fn points(&self, channels: &[MeasChannel]) -> Vec<Bloch> {
        let mut out = Vec::new();
        match *self {
            DisturbanceGrid::Sphere { n_theta, n_phi } => {
                let phi0 = channels.first().map_or(0.0, |c| c.delta);
                let n_theta = n_theta.max(2);
                out.push(Bloch::new(0.0, 0.0, 1.0));
                for i in 1..n_theta - 1 {
                    let theta = core::f64::consts::PI * i as f64 / (n_theta - 1) as f64;
                    for j in 0..n_phi {
                        let phi = phi0 + core::f64::consts::TAU * j as f64 / n_phi as f64;
                        out.push(Bloch::new(sin(theta) * cos(phi), sin(theta) * sin(phi), cos(theta)));
                    }
                }
                out.push(Bloch::new(0.0, 0.0, -1.0));
            }
            DisturbanceGrid::Disk { n } => {
                for x in axis_points(n) {
                    for y in axis_points(n) {
                        if x * x + y * y <= 1.0 + 1e-12 {
                            out.push(Bloch::new(x, y, 0.0));
                        }
                    }
                }
            }
            DisturbanceGrid::Ball { n } => {
                for x in axis_points(n) {
                    for y in axis_points(n) {
                        for z in axis_points(n) {
                            if x * x + y * y + z * z <= 1.0 + 1e-12 {
                                out.push(Bloch::new(x, y, z));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Evaluate the disturbance over `grid`.
pub fn disturbance_map(channels: &[MeasChannel], grid: DisturbanceGrid, dt: f64) -> DisturbanceField {
    let points = grid.points(channels);
    let values = points.iter().map(|p| disturbance_bloch(p, channels, dt)).collect();
    DisturbanceField { points, values, dt, channels: channels.to_vec() }
}

impl DisturbanceField {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Points whose value is below `rel · max`.
    pub fn zeros(&self, rel: f64) -> Vec<Bloch> {
        let cut = rel * self.max();
        self.points.iter().zip(&self.values).filter(|(_, &v)| v < cut).map(|(p, _)| *p).collect()
    }
}

/// Relative threshold below which a map value counts as zero.
pub const ZERO_THRESHOLD: f64 = 1e-6;
