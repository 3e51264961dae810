//! Finite-volume Fokker–Planck solver on the unit disk.
//!
//! Polar cells: a single disk cell of radius `h = 1/nr` at the origin, then
//! `nr − 1` rings of `nphi` cells each. Fluxes `J = v p − D∇p` use
//! exponentially fitted (Scharfetter–Gummel) weights for the radial and
//! angular parts and a vertex-based form for the mixed `D_rφ` part. Time
//! stepping is implicit Euler. The rim `r = 1` is a no-flux wall.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, expm1, fabs, sin, sqrt};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;

use super::{BlochDistribution, Coefficients, Grid};
use crate::error::{Error, Result};
use crate::state::{Bloch, MeasChannel};

const TAU: f64 = 2.0 * core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarGrid {
    pub nr: usize,
    pub nphi: usize,
}

impl Default for PolarGrid {
    fn default() -> Self {
        PolarGrid { nr: 200, nphi: 256 }
    }
}

impl PolarGrid {
    pub fn new(nr: usize, nphi: usize) -> Result<Self> {
        if nr < 3 || nphi < 4 {
            return Err(Error::InvalidParameter { name: "polar grid size", value: (nr.min(nphi)) as f64 });
        }
        Ok(PolarGrid { nr, nphi })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.nr as f64
    }

    pub fn dphi(&self) -> f64 {
        TAU / self.nphi as f64
    }

    pub fn n_cells(&self) -> usize {
        1 + (self.nr - 1) * self.nphi
    }

    /// Flat index of ring cell `(i, j)`, `i ≥ 1`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        1 + (i - 1) * self.nphi + j
    }

    /// Radius of the centre of ring `i` (zero for the origin cell).
    pub fn center_r(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            (i as f64 + 0.5) * self.h()
        }
    }

    /// Area of one cell of ring `i`.
    pub fn area(&self, i: usize) -> f64 {
        let h = self.h();
        if i == 0 {
            core::f64::consts::PI * h * h
        } else {
            self.center_r(i) * h * self.dphi()
        }
    }

    pub(crate) fn ring_of(&self, cell: usize) -> (usize, usize) {
        if cell == 0 {
            (0, 0)
        } else {
            (1 + (cell - 1) / self.nphi, (cell - 1) % self.nphi)
        }
    }

    /// Point with area-uniform coordinates `(a, b) ∈ [0, 1)²` inside `cell`.
    pub fn point_in_cell(&self, cell: usize, a: f64, b: f64) -> Bloch {
        let h = self.h();
        let (i, j) = self.ring_of(cell);
        let (r, phi) = if i == 0 {
            (h * sqrt(a), TAU * b)
        } else {
            let lo = i as f64 * h;
            let hi = lo + h;
            (sqrt(lo * lo + a * (hi * hi - lo * lo)), (j as f64 + b) * self.dphi())
        };
        Bloch::new(r * cos(phi), r * sin(phi), 0.0)
    }

    /// Cell containing the in-plane point `(x, y)`; points beyond the rim map
    /// to the outer ring.
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let r = sqrt(x * x + y * y);
        let i = ((r / self.h()) as usize).min(self.nr - 1);
        if i == 0 {
            return 0;
        }
        let mut phi = libm::atan2(y, x);
        if phi < 0.0 {
            phi += TAU;
        }
        let j = ((phi / self.dphi()) as usize).min(self.nphi - 1);
        self.cell(i, j)
    }
}

/// Cell-averaged probability density on a [`PolarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarDensity {
    pub grid: PolarGrid,
    pub p: Vec<f64>,
    pub time: f64,
}

impl PolarDensity {
    /// Cell-centre samples of `f(x, y)`, normalized to unit mass.
    pub fn from_fn(grid: PolarGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut p = vec![0.0; grid.n_cells()];
        p[0] = f(0.0, 0.0).max(0.0);
        for i in 1..grid.nr {
            let r = grid.center_r(i);
            for j in 0..grid.nphi {
                let phi = (j as f64 + 0.5) * grid.dphi();
                p[grid.cell(i, j)] = f(r * cos(phi), r * sin(phi)).max(0.0);
            }
        }
        let mut d = PolarDensity { grid, p, time: 0.0 };
        d.normalize()?;
        Ok(d)
    }

    /// All mass in the origin cell.
    pub fn origin_point(grid: PolarGrid) -> Self {
        let mut p = vec![0.0; grid.n_cells()];
        p[0] = 1.0 / grid.area(0);
        PolarDensity { grid, p, time: 0.0 }
    }

    /// Resample a planar histogram onto the polar grid.
    pub fn from_distribution(dist: &BlochDistribution, grid: PolarGrid) -> Result<Self> {
        let Grid::Planar { .. } = dist.grid else {
            return Err(Error::InvalidParameter { name: "grid dimension", value: 3.0 });
        };
        let w = dist.grid.bin_width();
        let mut off = 0.0;
        let mut mass = vec![0.0; grid.n_cells()];
        const SUB: usize = 8;
        for (idx, &m) in dist.probs.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let c = dist.grid.bin_center(idx);
            if sqrt(c[0] * c[0] + c[1] * c[1]) > 1.0 + w {
                off += m;
                continue;
            }
            for a in 0..SUB {
                for b in 0..SUB {
                    let x = c[0] + w * ((a as f64 + 0.5) / SUB as f64 - 0.5);
                    let y = c[1] + w * ((b as f64 + 0.5) / SUB as f64 - 0.5);
                    mass[grid.locate(x, y)] += m / (SUB * SUB) as f64;
                }
            }
        }
        if off > 1e-12 {
            return Err(Error::MassOffDisk { mass: off });
        }
        let p = mass
            .iter()
            .enumerate()
            .map(|(c, m)| m / grid.area(grid.ring_of(c).0))
            .collect();
        let mut d = PolarDensity { grid, p, time: dist.time };
        d.normalize()?;
        Ok(d)
    }

    fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidState("density has no mass".into()));
        }
        for v in &mut self.p {
            *v /= m;
        }
        Ok(())
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        self.p
            .iter()
            .enumerate()
            .map(|(c, v)| v * self.grid.area(self.grid.ring_of(c).0))
            .collect()
    }

    pub fn mass(&self) -> f64 {
        crate::ensemble::pairwise_sum(&self.cell_masses())
    }

    /// Mass per ring, index 0 being the origin cell.
    pub fn ring_masses(&self) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.nr];
        out[0] = self.p[0] * g.area(0);
        for (i, o) in out.iter_mut().enumerate().skip(1) {
            *o = (0..g.nphi).map(|j| self.p[g.cell(i, j)]).sum::<f64>() * g.area(i);
        }
        out
    }

    /// Largest within-ring density spread relative to the peak density.
    pub fn angular_anisotropy(&self) -> f64 {
        let g = self.grid;
        let peak = self.p.iter().copied().fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 1..g.nr {
            let ring = &self.p[g.cell(i, 0)..g.cell(i, 0) + g.nphi];
            let hi = ring.iter().copied().fold(f64::MIN, f64::max);
            let lo = ring.iter().copied().fold(f64::MAX, f64::min);
            worst = worst.max((hi - lo) / peak);
        }
        worst
    }

    /// Project onto an `n × n` Cartesian histogram by subsampling every cell.
    pub fn to_cartesian(&self, n: usize) -> BlochDistribution {
        const SUB: usize = 4;
        let grid = Grid::Planar { n };
        let mut probs = vec![0.0; grid.len()];
        for (cell, m) in self.cell_masses().into_iter().enumerate() {
            let share = m / (SUB * SUB) as f64;
            for a in 0..SUB {
                for b in 0..SUB {
                    let q = self.grid.point_in_cell(cell, (a as f64 + 0.5) / SUB as f64, (b as f64 + 0.5) / SUB as f64);
                    probs[grid.index(q.x, q.y, 0.0)] += share;
                }
            }
        }
        BlochDistribution { grid, probs, time: self.time }
    }
}

/// `B(x) = x / (eˣ − 1)`.
fn bernoulli(x: f64) -> f64 {
    if fabs(x) < 1e-8 {
        1.0 - 0.5 * x
    } else if x > 700.0 {
        0.0
    } else {
        x / expm1(x)
    }
}

/// Face weights `(α, β)` so that the flux is `α p_in − β p_out`.
fn fitted_weights(v: f64, d: f64, dist: f64) -> (f64, f64) {
    if d <= 1e-300 || fabs(v) * dist > 1e12 * d {
        return (v.max(0.0), (-v).max(0.0));
    }
    let pe = v * dist / d;
    (d / dist * bernoulli(-pe), d / dist * bernoulli(pe))
}

fn polar_components(c: &Coefficients, r: f64, phi: f64) -> ([f64; 2], [f64; 3]) {
    let (x, y) = (r * cos(phi), r * sin(phi));
    let rh = [cos(phi), sin(phi)];
    let ph = [-rh[1], rh[0]];
    let v = c.velocity(x, y);
    let d = c.diffusion(x, y);
    let quad = |a: [f64; 2], b: [f64; 2]| {
        a[0] * (d[0][0] * b[0] + d[0][1] * b[1]) + a[1] * (d[1][0] * b[0] + d[1][1] * b[1])
    };
    (
        [v[0] * rh[0] + v[1] * rh[1], v[0] * ph[0] + v[1] * ph[1]],
        [quad(rh, rh), quad(rh, ph), quad(ph, ph)],
    )
}

/// Implicit Euler integrator for a fixed channel set, grid and step.
///
/// Diffusion comes from a quadratic form per grid vertex in the two radial
/// and two angular face gradients around it. The form is positive
/// semidefinite whenever `D` is, which keeps the semi-discrete operator
/// dissipative with the mixed part included. The step matrix is factored
/// once by sparse LU.
#[derive(Debug)]
pub struct FokkerPlanckSolver {
    faces: Faces,
    dt: f64,
    rate: f64,
    lu: Lu<usize, f64>,
    courant: f64,
}

/// Face and vertex coefficients of the discrete operator.
#[derive(Debug, Clone)]
struct Faces {
    grid: PolarGrid,
    // Radial faces between ring i and i + 1 (i = 0 is origin to ring 1),
    // indexed i * nphi + j.
    ra: Vec<f64>,
    rb: Vec<f64>,
    // Angular faces between (i, j) and (i, j + 1), indexed (i − 1) * nphi + j.
    aa: Vec<f64>,
    ab: Vec<f64>,
    // Mixed coupling of the vertex at radius (i + 1) h and angle (j + 1) Δφ,
    // indexed i * nphi + j for i < nr − 1.
    cross: Vec<f64>,
}

impl FokkerPlanckSolver {
    pub fn new(channels: &[MeasChannel], grid: PolarGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveDt(dt));
        }
        let coeffs = Coefficients::new(channels);
        let (nr, nphi) = (grid.nr, grid.nphi);
        let (h, dphi) = (grid.h(), grid.dphi());
        let radial_dist = |i: usize| grid.center_r(i + 1) - grid.center_r(i);
        let mut courant: f64 = 0.0;

        // Conductances C (flux = −C Δp) assembled from the vertex forms.
        let n_f = (nr - 1) * nphi;
        let (mut cr, mut ca) = (vec![0.0; n_f], vec![0.0; n_f]);
        let mut cross = vec![0.0; n_f];
        for i in 0..nr {
            let rv = (i + 1) as f64 * h;
            let dist = if i + 1 < nr { radial_dist(i) } else { h };
            let wr = rv * dist * dphi;
            let wa = rv * h * dphi;
            let dphi_len = rv * dphi;
            for j in 0..nphi {
                let (_, d) = polar_components(&coeffs, rv, (j + 1) as f64 * dphi);
                let jp = (j + 1) % nphi;
                if i + 1 < nr {
                    cr[i * nphi + j] += 0.5 * wr * d[0] / (dist * dist);
                    cr[i * nphi + jp] += 0.5 * wr * d[0] / (dist * dist);
                    cross[i * nphi + j] = sqrt(wr * wa) * d[1] / (4.0 * dist * dphi_len);
                    ca[i * nphi + j] += 0.5 * wa * d[2] / (dphi_len * dphi_len);
                }
                if i >= 1 {
                    ca[(i - 1) * nphi + j] += 0.5 * wa * d[2] / (dphi_len * dphi_len);
                }
            }
        }

        let (mut ra, mut rb) = (vec![0.0; n_f], vec![0.0; n_f]);
        for i in 0..nr - 1 {
            let rf = (i + 1) as f64 * h;
            let dist = radial_dist(i);
            let len = rf * dphi;
            for j in 0..nphi {
                let (v, _) = polar_components(&coeffs, rf, (j as f64 + 0.5) * dphi);
                let f = i * nphi + j;
                let (a, b) = fitted_weights(v[0], cr[f] * dist / len, dist);
                ra[f] = a;
                rb[f] = b;
                courant = courant.max(dt * fabs(v[0]) / dist);
            }
        }
        let (mut aa, mut ab) = (vec![0.0; n_f], vec![0.0; n_f]);
        for i in 1..nr {
            let r = grid.center_r(i);
            let dist = r * dphi;
            for j in 0..nphi {
                let (v, _) = polar_components(&coeffs, r, (j + 1) as f64 * dphi);
                let f = (i - 1) * nphi + j;
                let (a, b) = fitted_weights(v[1], ca[f] * dist / h, dist);
                aa[f] = a;
                ab[f] = b;
                courant = courant.max(dt * fabs(v[1]) / dist);
            }
        }
        if courant > 1.0 {
            return Err(Error::Cfl { courant });
        }
        let faces = Faces { grid, ra, rb, aa, ab, cross };
        let mut entries = faces.operator_entries();
        for e in entries.iter_mut() {
            e.val *= -dt;
        }
        entries.extend((0..grid.n_cells()).map(|c| Triplet::new(c, c, 1.0)));
        let m = SparseColMat::try_new_from_triplets(grid.n_cells(), grid.n_cells(), &entries)
            .map_err(|_| Error::SingularSystem)?;
        let lu = m.sp_lu().map_err(|_| Error::SingularSystem)?;
        Ok(FokkerPlanckSolver { faces, dt, rate: coeffs.max_rate(), lu, courant })
    }

    pub fn courant(&self) -> f64 {
        self.courant
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Semi-discrete right-hand side `dp/dt`.
    pub fn operator(&self, p: &[f64], out: &mut [f64]) {
        let g = self.faces.grid;
        out.iter_mut().for_each(|v| *v = 0.0);
        self.faces.for_each_transport(|from, to, c, w| {
            let t = w * p[c];
            out[from] -= t;
            out[to] += t;
        });
        for (c, v) in out.iter_mut().enumerate() {
            *v /= g.area(g.ring_of(c).0);
        }
    }

    /// One implicit Euler step.
    pub fn step(&self, p: &mut [f64]) {
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(p, p.len(), 1));
    }

    /// Largest net probability flux through any circle `r = const`, in units
    /// of probability per `1/Γ_max`.
    pub fn radial_flux_residual(&self, p: &[f64]) -> f64 {
        let g = self.faces.grid;
        let mut through = vec![0.0; g.nr - 1];
        let ring = |c: usize| g.ring_of(c).0;
        self.faces.for_each_transport(|from, to, c, w| {
            let (a, b) = (ring(from), ring(to));
            if a != b {
                through[a.min(b)] += if b > a { w * p[c] } else { -w * p[c] };
            }
        });
        through.iter().fold(0.0f64, |m, t| m.max(fabs(*t))) / self.rate.max(1e-300)
    }

    /// Advance `density` by `n_steps`.
    pub fn advance(&self, density: &mut PolarDensity, n_steps: usize) {
        for _ in 0..n_steps {
            self.step(&mut density.p);
        }
        density.time += n_steps as f64 * self.dt;
    }
}

impl Faces {
    fn face_len(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.grid.h() * self.grid.dphi()
    }

    /// Calls `add(from, to, cell, w)` for every term `w · p[cell]` of the
    /// probability per unit time moving from cell `from` to cell `to`.
    fn for_each_transport(&self, mut add: impl FnMut(usize, usize, usize, f64)) {
        let g = self.grid;
        let (nr, nphi) = (g.nr, g.nphi);
        let h = g.h();
        let at = |i: usize, j: usize| if i == 0 { 0 } else { g.cell(i, j) };
        for i in 0..nr - 1 {
            let len = self.face_len(i);
            for j in 0..nphi {
                let f = i * nphi + j;
                let (inner, outer) = (at(i, j), g.cell(i + 1, j));
                add(inner, outer, inner, self.ra[f] * len);
                add(inner, outer, outer, -self.rb[f] * len);
            }
        }
        for i in 1..nr {
            for j in 0..nphi {
                let f = (i - 1) * nphi + j;
                let (c, cp) = (g.cell(i, j), g.cell(i, (j + 1) % nphi));
                add(c, cp, c, self.aa[f] * h);
                add(c, cp, cp, -self.ab[f] * h);
            }
        }
        // The mixed energy of a vertex is x · dr · da, with dr and da the
        // summed differences across its two radial and two angular faces.
        for i in 0..nr - 1 {
            for j in 0..nphi {
                let x = self.cross[i * nphi + j];
                if x == 0.0 {
                    continue;
                }
                let jp = (j + 1) % nphi;
                let corners = [(at(i, j), -1.0), (at(i + 1, jp), 1.0)];
                let da = [corners[0], corners[1], (at(i, jp), 1.0), (at(i + 1, j), -1.0)];
                let dr = [corners[0], corners[1], (at(i, jp), -1.0), (at(i + 1, j), 1.0)];
                for (from, to) in [(at(i, j), at(i + 1, j)), (at(i, jp), at(i + 1, jp))] {
                    for &(c, s) in &da {
                        add(from, to, c, -x * s);
                    }
                }
                let mut faces = [(at(i + 1, j), at(i + 1, jp)), (0, 0)];
                let n_faces = if i >= 1 {
                    faces[1] = (at(i, j), at(i, jp));
                    2
                } else {
                    1
                };
                for &(from, to) in &faces[..n_faces] {
                    for &(c, s) in &dr {
                        add(from, to, c, -x * s);
                    }
                }
            }
        }
    }

    /// Entries of the semi-discrete operator `dp/dt = A p`, duplicates merged.
    fn operator_entries(&self) -> Vec<Triplet<usize, usize, f64>> {
        let g = self.grid;
        let area = |c: usize| g.area(g.ring_of(c).0);
        let mut raw: Vec<(usize, usize, f64)> = Vec::new();
        self.for_each_transport(|from, to, c, w| {
            if from != to && w != 0.0 {
                raw.push((from, c, -w / area(from)));
                raw.push((to, c, w / area(to)));
            }
        });
        raw.sort_unstable_by_key(|a| (a.1, a.0));
        let mut out: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(raw.len() / 2);
        for (r, c, v) in raw {
            match out.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => out.push(Triplet::new(r, c, v)),
            }
        }
        out
    }
}

fn check_initial(initial: &PolarDensity) -> Result<()> {
    let mass = initial.mass();
    if fabs(mass - 1.0) > 1e-9 {
        return Err(Error::InvalidState(alloc::format!("initial mass {mass}")));
    }
    Ok(())
}

/// Solve from `initial` to `t_final` with steps of at most `dt_pde`.
pub fn propagate_pde(
    initial: &PolarDensity,
    channels: &[MeasChannel],
    t_final: f64,
    dt_pde: f64,
) -> Result<PolarDensity> {
    check_initial(initial)?;
    if !(t_final >= 0.0) {
        return Err(Error::InvalidParameter { name: "t_final", value: t_final });
    }
    let n_steps = crate::engine::steps_for(t_final, dt_pde)?;
    let mut out = initial.clone();
    if n_steps == 0 {
        return Ok(out);
    }
    let solver = FokkerPlanckSolver::new(channels, initial.grid, t_final / n_steps as f64)?;
    solver.advance(&mut out, n_steps);
    out.time = initial.time + t_final;
    Ok(out)
}

/// Densities at each of `times` (measured from `initial.time`, each a
/// multiple of `dt_pde`) from one factorization.
pub fn propagate_pde_series(
    initial: &PolarDensity,
    channels: &[MeasChannel],
    times: &[f64],
    dt_pde: f64,
) -> Result<Vec<PolarDensity>> {
    check_initial(initial)?;
    let solver = FokkerPlanckSolver::new(channels, initial.grid, dt_pde)?;
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let k = libm::round(t / dt_pde);
        if !(t >= 0.0) || fabs(k * dt_pde - t) > 1e-9 * dt_pde.max(t) {
            return Err(Error::NotMultipleOfDt { time: t, dt: dt_pde });
        }
        order.push((k as usize, ti));
    }
    order.sort_unstable();
    let mut out = vec![initial.clone(); times.len()];
    let mut d = initial.clone();
    let mut taken = 0;
    for (k, ti) in order {
        solver.advance(&mut d, k - taken);
        taken = k;
        d.time = initial.time + times[ti];
        out[ti] = d.clone();
    }
    Ok(out)
}

/// Integrate until the radial flux residual drops below `tol`.
pub fn steady_state(
    initial: &PolarDensity,
    channels: &[MeasChannel],
    dt_pde: f64,
    tol: f64,
    max_time: f64,
) -> Result<(PolarDensity, f64)> {
    let solver = FokkerPlanckSolver::new(channels, initial.grid, dt_pde)?;
    let mut d = initial.clone();
    let check = 200;
    let max_steps = crate::engine::steps_for(max_time, dt_pde)?;
    let mut taken = 0;
    loop {
        solver.advance(&mut d, check);
        taken += check;
        let res = solver.radial_flux_residual(&d.p);
        if res < tol {
            return Ok((d, res));
        }
        if taken >= max_steps {
            return Err(Error::NonConvergence { iterations: taken });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    const GAMMA: f64 = 2.0 * PI * 122e3;

    fn symmetric(eta: f64) -> Vec<MeasChannel> {
        vec![MeasChannel::new(0.0, GAMMA, eta).unwrap(), MeasChannel::new(FRAC_PI_2, GAMMA, eta).unwrap()]
    }

    #[test]
    fn cell_areas_tile_the_disk() {
        let g = PolarGrid::new(20, 16).unwrap();
        let total: f64 = g.area(0) + (1..g.nr).map(|i| g.area(i) * g.nphi as f64).sum::<f64>();
        assert!((total - PI).abs() < 1e-12);
        for cell in [0, 5, g.n_cells() - 1] {
            let q = g.point_in_cell(cell, 0.3, 0.7);
            assert_eq!(g.locate(q.x, q.y), cell);
        }
    }

    #[test]
    fn operator_conserves_mass_and_dissipates() {
        let g = PolarGrid::new(12, 16).unwrap();
        let ch = [MeasChannel::new(0.0, GAMMA, 0.41).unwrap(), MeasChannel::new(0.3, GAMMA, 0.49).unwrap()];
        let s = FokkerPlanckSolver::new(&ch, g, 1e-9).unwrap();
        let n = g.n_cells();
        let mut col = vec![0.0; n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            s.operator(&e, &mut col);
            let mass: f64 = (0..n).map(|k| col[k] * g.area(g.ring_of(k).0)).sum();
            assert!(mass.abs() < 1e-6 * GAMMA, "column {c} leaks {mass}");
        }
        // Power iteration on the implicit step: no mode may grow.
        let mut v: Vec<f64> = (0..n).map(|k| libm::sin(k as f64 * 1.3)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut last = norm(&v);
        for _ in 0..400 {
            s.step(&mut v);
            let now = norm(&v);
            assert!(now <= last * (1.0 + 1e-9) || now < 1e-12);
            last = now;
        }
    }

    #[test]
    fn mass_is_conserved() {
        let g = PolarGrid::new(40, 32).unwrap();
        let ch = [MeasChannel::new(0.0, GAMMA, 0.41).unwrap(), MeasChannel::new(PI / 4.0, GAMMA, 0.49).unwrap()];
        let init = PolarDensity::from_fn(g, |x, y| libm::exp(-((x - 0.2) * (x - 0.2) + y * y) / 0.08)).unwrap();
        let out = propagate_pde(&init, &ch, 1e-6, 2e-9).unwrap();
        assert!((out.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn origin_start_stays_isotropic() {
        let g = PolarGrid::new(50, 64).unwrap();
        let out = propagate_pde(&PolarDensity::origin_point(g), &symmetric(0.45), 1e-6, 2e-9).unwrap();
        assert!(out.angular_anisotropy() < 1e-3, "{}", out.angular_anisotropy());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = PolarGrid::new(200, 256).unwrap();
        let r = FokkerPlanckSolver::new(&symmetric(0.45), g, 1e-6);
        assert!(matches!(r, Err(Error::Cfl { .. })));
    }
}
