//! Distributions of the conditioned state over the Bloch ball.
//!
//! With both measurement axes in the xy-plane a state that starts at `z = 0`
//! stays there, and the ensemble density on the unit disk obeys
//! `∂p/∂t = −∇·(a p) + ∂ᵢ∂ⱼ(Dᵢⱼ p)` with
//! `a = −Σ Γᵢ (r − sᵢ nᵢ)` and `D = Σ Γᵢηᵢ uᵢuᵢᵀ`, where `sᵢ = nᵢ·r` and
//! `uᵢ = nᵢ − sᵢ r`.

pub mod angular;
pub mod mc;
pub mod pde;

use alloc::vec;
use alloc::vec::Vec;

use libm::{atan2, exp, fabs, floor, pow, sqrt};

use crate::error::{Error, Result};
use crate::state::MeasChannel;

pub use angular::{angular_diffusion_constant, angular_variance_series, fit_wrapped_normal, AngularDiffusion};
pub use mc::{propagate_mc, sample_ensemble, InitialCondition, McConfig};
pub use pde::{propagate_pde, FokkerPlanckSolver, PolarDensity, PolarGrid};

#[derive(Debug, Clone, Copy)]
struct Axis {
    n: [f64; 2],
    gamma: f64,
    gamma_eta: f64,
}

/// Drift and diffusion of the in-plane Bloch vector.
#[derive(Debug, Clone)]
pub struct Coefficients {
    axes: Vec<Axis>,
}

impl Coefficients {
    pub fn new(channels: &[MeasChannel]) -> Self {
        let axes = channels
            .iter()
            .map(|c| {
                let a = c.axis();
                Axis { n: [a.x, a.y], gamma: c.gamma, gamma_eta: c.gamma * c.eta }
            })
            .collect();
        Coefficients { axes }
    }

    /// Largest `Γ` among the channels.
    pub fn max_rate(&self) -> f64 {
        self.axes.iter().map(|a| a.gamma).fold(0.0, f64::max)
    }

    pub fn drift(&self, x: f64, y: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for a in &self.axes {
            let s = a.n[0] * x + a.n[1] * y;
            out[0] -= a.gamma * (x - s * a.n[0]);
            out[1] -= a.gamma * (y - s * a.n[1]);
        }
        out
    }

    pub fn diffusion(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let mut d = [[0.0; 2]; 2];
        for a in &self.axes {
            let s = a.n[0] * x + a.n[1] * y;
            let u = [a.n[0] - s * x, a.n[1] - s * y];
            for i in 0..2 {
                for j in 0..2 {
                    d[i][j] += a.gamma_eta * u[i] * u[j];
                }
            }
        }
        d
    }

    /// `(∇·D)ⱼ = Σᵢ ∂ᵢ Dᵢⱼ`.
    pub fn diffusion_divergence(&self, x: f64, y: f64) -> [f64; 2] {
        // div(u uᵀ) = −4 s u − (1 − s²) r in two dimensions.
        let mut out = [0.0; 2];
        for a in &self.axes {
            let s = a.n[0] * x + a.n[1] * y;
            let u = [a.n[0] - s * x, a.n[1] - s * y];
            out[0] += a.gamma_eta * (-4.0 * s * u[0] - (1.0 - s * s) * x);
            out[1] += a.gamma_eta * (-4.0 * s * u[1] - (1.0 - s * s) * y);
        }
        out
    }

    /// Effective velocity `a − ∇·D` of the flux `J = v p − D ∇p`.
    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        let a = self.drift(x, y);
        let d = self.diffusion_divergence(x, y);
        [a[0] - d[0], a[1] - d[1]]
    }
}

/// Histogram layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// `n × n` bins over `[−1, 1]²`, row index `x`.
    Planar { n: usize },
    /// `n × n × n` bins over `[−1, 1]³`.
    Ball { n: usize },
}

impl Grid {
    pub fn len(&self) -> usize {
        match *self {
            Grid::Planar { n } => n * n,
            Grid::Ball { n } => n * n * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn side(&self) -> usize {
        match *self {
            Grid::Planar { n } | Grid::Ball { n } => n,
        }
    }

    pub fn bin_width(&self) -> f64 {
        2.0 / self.side() as f64
    }

    fn coord_index(&self, v: f64) -> usize {
        let n = self.side();
        let k = floor((v + 1.0) / 2.0 * n as f64);
        if k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    fn center(&self, k: usize) -> f64 {
        -1.0 + (k as f64 + 0.5) * self.bin_width()
    }

    /// Flat bin index of a point.
    pub fn index(&self, x: f64, y: f64, z: f64) -> usize {
        let n = self.side();
        match self {
            Grid::Planar { .. } => self.coord_index(x) * n + self.coord_index(y),
            Grid::Ball { .. } => (self.coord_index(x) * n + self.coord_index(y)) * n + self.coord_index(z),
        }
    }

    /// Bin center `(x, y, z)`; `z = 0` for planar grids.
    pub fn bin_center(&self, index: usize) -> [f64; 3] {
        let n = self.side();
        match self {
            Grid::Planar { .. } => [self.center(index / n), self.center(index % n), 0.0],
            Grid::Ball { .. } => {
                [self.center(index / (n * n)), self.center((index / n) % n), self.center(index % n)]
            }
        }
    }
}

/// Binned probabilities at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochDistribution {
    pub grid: Grid,
    pub probs: Vec<f64>,
    pub time: f64,
}

impl BlochDistribution {
    pub fn from_counts(grid: Grid, counts: &[u64], time: f64) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData("empty histogram".into()));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(BlochDistribution { grid, probs, time })
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `½ Σ |p − q|`.
    pub fn total_variation(&self, other: &BlochDistribution) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter { name: "grid mismatch", value: f64::NAN });
        }
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| fabs(a - b)).sum::<f64>())
    }

    /// Probability per radial shell `[k/n, (k+1)/n)` using bin centers.
    pub fn radial_marginal(&self, n_bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_bins];
        for (i, p) in self.probs.iter().enumerate() {
            let c = self.grid.bin_center(i);
            let r = sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
            let k = ((r * n_bins as f64) as usize).min(n_bins - 1);
            out[k] += p;
        }
        out
    }

    /// Probability per azimuthal sector of `atan2(y, x) ∈ [−π, π)`.
    pub fn azimuthal_marginal(&self, n_bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_bins];
        for (i, p) in self.probs.iter().enumerate() {
            let c = self.grid.bin_center(i);
            out[sector(atan2(c[1], c[0]), n_bins)] += p;
        }
        out
    }
}

pub(crate) fn sector(phi: f64, n_bins: usize) -> usize {
    let u = (phi + core::f64::consts::PI) / (2.0 * core::f64::consts::PI);
    ((u * n_bins as f64) as usize).min(n_bins - 1)
}

/// Total-variation distance of a histogram from the uniform distribution.
pub fn tv_from_uniform(probs: &[f64]) -> f64 {
    let total: f64 = probs.iter().sum();
    let u = 1.0 / probs.len() as f64;
    0.5 * probs.iter().map(|p| fabs(p / total - u)).sum::<f64>()
}

/// Unnormalized stationary radial density for symmetric orthogonal channels
/// of equal rate and efficiency `eta` (per unit radius, including the `r`
/// Jacobian).
pub fn stationary_radial_density(r: f64, eta: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - r * r;
    if eta >= 1.0 {
        return 0.0;
    }
    r * pow(w, -2.5) * exp(-(1.0 - eta) / (2.0 * eta * w))
}
