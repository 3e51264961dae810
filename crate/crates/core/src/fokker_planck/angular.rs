//! Azimuthal random walk of states inside a thin ring.

use alloc::vec::Vec;

use libm::{atan2, cos, exp, fabs, log, sin};

use super::mc::{sample_ensemble, InitialCondition, McConfig};
use crate::error::{Error, Result};
use crate::state::{Bloch, MeasChannel};

const TAU: f64 = 2.0 * core::f64::consts::PI;
const WRAPS: i32 = 5;
/// Ring members needed before a time point counts toward the fit.
pub const MIN_RING_COUNT: usize = 50;

/// Maximum-likelihood wrapped normal `(mean, variance)` by EM over the
/// `|k| ≤ 5` images of every angle.
pub fn fit_wrapped_normal(angles: &[f64]) -> Result<(f64, f64)> {
    if angles.is_empty() {
        return Err(Error::EmptyRing);
    }
    let n = angles.len() as f64;
    let (mut c, mut s) = (0.0, 0.0);
    for &a in angles {
        c += cos(a);
        s += sin(a);
    }
    let mut mu = atan2(s, c);
    let r = libm::sqrt(c * c + s * s) / n;
    if r > 1.0 - 1e-12 {
        return Ok((mu, 0.0));
    }
    let mut var = (-2.0 * log(r)).max(1e-6);
    let mut weights = [0.0; (2 * WRAPS + 1) as usize];
    for _ in 0..20_000 {
        let (mut m1, mut m2) = (0.0, 0.0);
        for &a in angles {
            let mut total = 0.0;
            for (slot, k) in (-WRAPS..=WRAPS).enumerate() {
                let d = a + TAU * k as f64 - mu;
                weights[slot] = exp(-d * d / (2.0 * var));
                total += weights[slot];
            }
            if total == 0.0 {
                // Far tail of a narrow fit: assign to the nearest image.
                let k = libm::round((mu - a) / TAU);
                let d = a + TAU * k - mu;
                m1 += d;
                m2 += d * d;
                continue;
            }
            for (slot, k) in (-WRAPS..=WRAPS).enumerate() {
                let w = weights[slot] / total;
                let d = a + TAU * k as f64 - mu;
                m1 += w * d;
                m2 += w * d * d;
            }
        }
        let shift = m1 / n;
        let new_var = (m2 / n - shift * shift).max(1e-300);
        mu += shift;
        let done = fabs(shift) < 1e-12 && fabs(new_var - var) < 1e-12 * var.max(1e-12);
        var = new_var;
        if done {
            return Ok((libm::remainder(mu, TAU), var));
        }
    }
    Err(Error::NonConvergence { iterations: 20_000 })
}

/// Area average over the annulus of the instantaneous angular diffusion
/// rate `Σ 2Γᵢηᵢ sin²(φ − δᵢ) / r²`, by midpoint quadrature.
pub fn angular_diffusion_constant(channels: &[MeasChannel], r_inner: f64, r_outer: f64) -> f64 {
    let (nr, nphi) = (400, 720);
    let (dr, dphi) = ((r_outer - r_inner) / nr as f64, TAU / nphi as f64);
    let (mut num, mut area) = (0.0, 0.0);
    for i in 0..nr {
        let r = r_inner + (i as f64 + 0.5) * dr;
        for j in 0..nphi {
            let phi = (j as f64 + 0.5) * dphi;
            let rate: f64 = channels
                .iter()
                .map(|c| {
                    let s = sin(phi - c.delta);
                    2.0 * c.gamma * c.eta * s * s
                })
                .sum::<f64>()
                / (r * r);
            num += rate * r;
            area += r;
        }
    }
    num / area
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularDiffusion {
    pub times: Vec<f64>,
    /// Wrapped-normal variance per time; NaN when the ring held too few states.
    pub variances: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Every time point was usable and the variance grew linearly.
    pub diffusive: bool,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}

/// Track trajectories started at `start`, keep those inside
/// `ring_inner ≤ r ≤ ring_outer` at each time, and fit the growth of their
/// angular variance.
pub fn angular_variance_series(
    channels: &[MeasChannel],
    ring_inner: f64,
    ring_outer: f64,
    start: Bloch,
    times: &[f64],
    config: &McConfig,
) -> Result<AngularDiffusion> {
    if !(ring_inner < ring_outer) {
        return Err(Error::InvalidParameter { name: "ring_outer", value: ring_outer });
    }
    let samples = sample_ensemble(&InitialCondition::Point(start), channels, times, config)?;
    let mut variances = Vec::with_capacity(times.len());
    let mut counts = Vec::with_capacity(times.len());
    for states in &samples {
        let angles: Vec<f64> = states
            .iter()
            .filter(|b| {
                let r = libm::sqrt(b.x * b.x + b.y * b.y);
                r >= ring_inner && r <= ring_outer
            })
            .map(|b| atan2(b.y, b.x))
            .collect();
        counts.push(angles.len());
        variances.push(if angles.len() >= MIN_RING_COUNT { fit_wrapped_normal(&angles)?.1 } else { f64::NAN });
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyRing);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&variances).filter(|(_, v)| v.is_finite()).map(|(t, v)| (*t, *v)).unzip();
    let (slope, intercept, r_squared) =
        if xs.len() >= 2 { linear_fit(&xs, &ys) } else { (f64::NAN, f64::NAN, 0.0) };
    let diffusive = xs.len() == times.len() && slope > 0.0 && r_squared >= 0.95;
    Ok(AngularDiffusion { times: times.to_vec(), variances, counts, slope, intercept, r_squared, diffusive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn wrapped_normal_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(mu, var) in &[(0.3, 0.05), (-2.9, 0.8), (1.0, 2.5)] {
            let dist = Normal::new(mu, libm::sqrt(var)).unwrap();
            let angles: Vec<f64> = (0..40_000).map(|_| libm::remainder(dist.sample(&mut rng), TAU)).collect();
            let (m, v) = fit_wrapped_normal(&angles).unwrap();
            let dm = libm::remainder(m - mu, TAU);
            assert!(dm.abs() < 0.03, "mean {m} vs {mu}");
            assert!((v - var).abs() < 0.04 * var.max(0.1), "var {v} vs {var}");
        }
    }

    #[test]
    fn point_mass_has_zero_variance() {
        assert_eq!(fit_wrapped_normal(&[0.4; 10]).unwrap().1, 0.0);
        assert!(matches!(fit_wrapped_normal(&[]), Err(Error::EmptyRing)));
    }

    #[test]
    fn diffusion_constant_closed_form() {
        // Azimuthal average of sin² is 1/2 and ⟨1/r²⟩ over the annulus area is
        // 2 ln(b/a) / (b² − a²).
        let ch = vec![MeasChannel::new(0.0, 3.0, 0.4).unwrap(), MeasChannel::new(1.0, 2.0, 0.7).unwrap()];
        let (a, b) = (0.86, 0.92);
        let expected = (3.0 * 0.4 + 2.0 * 0.7) * 2.0 * libm::log(b / a) / (b * b - a * a);
        assert!((angular_diffusion_constant(&ch, a, b) - expected).abs() < 1e-5 * expected);
    }

    #[test]
    fn linear_fit_exact() {
        let (s, i, r2) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
