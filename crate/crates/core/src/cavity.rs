//! Joint qubit-cavity simulation used to check the effective measurement model.
//!
//! The cavity is simulated in the displaced frame, where the sideband drive
//! has been removed and the qubit couples through `H = g̃ σ_δ (d + d†)` with
//! `g̃ = χā₀/2`. The cavity decays at `κ` and its output is monitored by
//! homodyne detection of the quadrature carrying the qubit signal. Joint states
//! are dense `2N × 2N` matrices indexed by `q·N + n` (qubit level `q`, Fock
//! level `n`); all operators are sparse.

use alloc::vec;
use alloc::vec::Vec;

use libm::{atan2, exp, log, sqrt};
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{filter, steps_for, ImperfectionParams, MeasurementRecord};
use crate::ensemble::{trajectory_seed, try_par_map};
use crate::error::{Error, Result};
use crate::fokker_planck::angular::linear_fit;
use crate::state::{sigma_delta, Bloch, MeasChannel, QubitState};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Largest population allowed in the two highest Fock levels.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

/// Smallest `κ/Γ` accepted as the adiabatic regime.
pub const ADIABATIC_RATIO: f64 = 50.0;

/// Parameters of one sideband-driven cavity mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// Dispersive shift (angular, s⁻¹).
    pub chi: f64,
    /// Cavity linewidth (angular, s⁻¹).
    pub kappa: f64,
    /// Sideband displacement amplitude, `n̄₀ = ā₀²`.
    pub abar0: f64,
    /// Sideband relative phase (rad).
    pub delta: f64,
    pub fock_dim: usize,
    /// Homodyne detection efficiency.
    pub eta: f64,
}

impl CavityParams {
    /// Choose `ā₀` so that `2χ²n̄₀/κ = gamma`.
    pub fn for_rate(chi: f64, kappa: f64, gamma: f64, delta: f64, fock_dim: usize, eta: f64) -> Result<Self> {
        if !(chi > 0.0) {
            return Err(Error::InvalidParameter { name: "chi", value: chi });
        }
        let p = CavityParams { chi, kappa, abar0: sqrt(gamma * kappa / (2.0 * chi * chi)), delta, fock_dim, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn g_tilde(&self) -> f64 {
        0.5 * self.chi * self.abar0
    }

    /// `Γ = 8g̃²/κ = 2χ²n̄₀/κ`.
    pub fn gamma_target(&self) -> f64 {
        let g = self.g_tilde();
        8.0 * g * g / self.kappa
    }

    /// Smallest Fock dimension considered safe for a coherent amplitude `a`.
    pub fn min_fock_dim(amplitude: f64) -> usize {
        let b = amplitude + 3.0;
        libm::floor(b * b + 10.0) as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter { name: "kappa", value: self.kappa });
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter { name: "eta", value: self.eta });
        }
        if !(self.abar0 >= 0.0) || !self.chi.is_finite() || !self.delta.is_finite() {
            return Err(Error::InvalidParameter { name: "abar0", value: self.abar0 });
        }
        let amp = 2.0 * self.g_tilde() / self.kappa;
        if self.fock_dim < 2 || self.fock_dim < Self::min_fock_dim(amp) {
            return Err(Error::InvalidParameter { name: "fock_dim", value: self.fock_dim as f64 });
        }
        Ok(())
    }

    fn check_adiabatic(&self) -> Result<()> {
        let gamma = self.gamma_target();
        if gamma > 0.0 && self.kappa < ADIABATIC_RATIO * gamma {
            return Err(Error::InvalidParameter { name: "kappa/gamma", value: self.kappa / gamma });
        }
        Ok(())
    }

    /// The effective measurement channel predicted for this mode.
    pub fn channel(&self) -> Result<MeasChannel> {
        MeasChannel::new(self.delta, self.gamma_target(), self.eta)
    }
}

/// Sparse operator as `(row, col, value)` triplets.
#[derive(Debug, Clone)]
struct SparseOp {
    entries: Vec<(usize, usize, C)>,
}

impl SparseOp {
    fn adjoint(&self) -> SparseOp {
        SparseOp { entries: self.entries.iter().map(|&(i, j, a)| (j, i, a.conj())).collect() }
    }

    fn scaled(&self, s: C) -> SparseOp {
        SparseOp { entries: self.entries.iter().map(|&(i, j, a)| (i, j, a * s)).collect() }
    }

    fn plus(mut self, other: &SparseOp) -> SparseOp {
        self.entries.extend_from_slice(&other.entries);
        self
    }

    /// `out += s · A ρ`
    fn left(&self, rho: &[C], dim: usize, s: C, out: &mut [C]) {
        for &(i, k, a) in &self.entries {
            let a = a * s;
            let (src, dst) = (&rho[k * dim..(k + 1) * dim], i * dim);
            for (j, v) in src.iter().enumerate() {
                out[dst + j] += a * v;
            }
        }
    }

    /// `out += s · ρ A`
    fn right(&self, rho: &[C], dim: usize, s: C, out: &mut [C]) {
        for &(k, j, a) in &self.entries {
            let a = a * s;
            for i in 0..dim {
                out[i * dim + j] += rho[i * dim + k] * a;
            }
        }
    }
}

/// Operators of the joint model.
#[derive(Debug, Clone)]
struct JointModel {
    dim: usize,
    kappa: f64,
    /// `K = −iH − ½κ d†d`
    k: SparseOp,
    k_dag: SparseOp,
    d: SparseOp,
    d_dag: SparseOp,
}

impl JointModel {
    /// `drive` is a real resonant cavity drive amplitude `ε`, adding
    /// `iε(d† − d)`.
    fn new(p: &CavityParams, drive: f64) -> Self {
        let n = p.fock_dim;
        let dim = 2 * n;
        let sd = sigma_delta(p.delta).matrix;
        let lower: Vec<(usize, usize, f64)> = (0..n - 1).map(|m| (m, m + 1, sqrt((m + 1) as f64))).collect();
        let d = SparseOp {
            entries: (0..2)
                .flat_map(|q| lower.iter().map(move |&(i, j, v)| (q * n + i, q * n + j, C::new(v, 0.0))))
                .collect(),
        };
        let d_dag = d.adjoint();
        // g̃ σ_δ ⊗ (d + d†)
        let mut h = Vec::new();
        for (a, row) in sd.iter().enumerate() {
            for (b, &s) in row.iter().enumerate() {
                if s.norm() == 0.0 {
                    continue;
                }
                let s = s * p.g_tilde();
                for &(i, j, v) in &lower {
                    h.push((a * n + i, b * n + j, s * v));
                    h.push((a * n + j, b * n + i, s * v));
                }
            }
        }
        let mut h = SparseOp { entries: h };
        if drive != 0.0 {
            h = h.plus(&d_dag.clone().plus(&d.scaled(-ONE)).scaled(C::new(0.0, drive)));
        }
        let mut k = h.scaled(C::new(0.0, -1.0));
        let number: Vec<(usize, usize, C)> =
            (0..dim).filter(|i| i % n > 0).map(|i| (i, i, C::new(-0.5 * p.kappa * (i % n) as f64, 0.0))).collect();
        k = k.plus(&SparseOp { entries: number });
        let k_dag = k.adjoint();
        JointModel { dim, kappa: p.kappa, k, k_dag, d, d_dag }
    }

    /// `dρ/dt = Kρ + ρK† + κ dρd†`
    fn lindblad(&self, rho: &[C], out: &mut [C], tmp: &mut [C]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        tmp.iter_mut().for_each(|v| *v = ZERO);
        self.k.left(rho, self.dim, ONE, out);
        self.k_dag.right(rho, self.dim, ONE, out);
        self.d.left(rho, self.dim, ONE, tmp);
        self.d_dag.right(tmp, self.dim, C::new(self.kappa, 0.0), out);
    }
}

/// Joint density matrix of qubit and cavity.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    n: usize,
    rho: Vec<C>,
}

impl JointState {
    /// Product of a qubit state with the cavity vacuum.
    pub fn with_vacuum(qubit: &QubitState, fock_dim: usize) -> Self {
        let n = fock_dim;
        let dim = 2 * n;
        let mut rho = vec![ZERO; dim * dim];
        let m = qubit.matrix();
        for a in 0..2 {
            for b in 0..2 {
                rho[(a * n) * dim + b * n] = m[a][b];
            }
        }
        JointState { n, rho }
    }

    fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.rho[i * self.dim() + i].re).sum()
    }

    /// Reduced qubit Bloch vector.
    pub fn qubit(&self) -> Bloch {
        let (n, dim) = (self.n, self.dim());
        let mut q = [[ZERO; 2]; 2];
        for (a, row) in q.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = (0..n).map(|m| self.rho[(a * n + m) * dim + b * n + m]).sum();
            }
        }
        let tr = (q[0][0] + q[1][1]).re;
        Bloch::new(2.0 * q[0][1].re / tr, -2.0 * q[0][1].im / tr, (q[0][0] - q[1][1]).re / tr)
    }

    /// Population of the two highest Fock levels.
    pub fn top_population(&self) -> f64 {
        let (n, dim) = (self.n, self.dim());
        (0..2)
            .flat_map(|q| [q * n + n - 1, q * n + n.saturating_sub(2)])
            .map(|i| self.rho[i * dim + i].re)
            .sum::<f64>()
            / self.trace()
    }

    /// Mean photon number.
    pub fn photons(&self) -> f64 {
        let dim = self.dim();
        (0..dim).map(|i| (i % self.n) as f64 * self.rho[i * dim + i].re).sum::<f64>() / self.trace()
    }

    /// Smallest purity of the cavity state conditioned on either eigenstate of
    /// `σ_δ`, ignoring eigenstates with population below `1e−6`.
    pub fn conditional_cavity_purity(&self, delta: f64) -> f64 {
        let (n, dim) = (self.n, self.dim());
        let mut worst: f64 = 1.0;
        for sign in [1.0, -1.0] {
            // |±_δ⟩ = (|0⟩ ± e^{iδ}|1⟩)/√2
            let h = core::f64::consts::FRAC_1_SQRT_2;
            let v = [C::new(h, 0.0), C::from_polar(sign * h, delta)];
            let mut c = vec![ZERO; n * n];
            for a in 0..2 {
                for b in 0..2 {
                    let w = v[a].conj() * v[b];
                    for i in 0..n {
                        for j in 0..n {
                            c[i * n + j] += w * self.rho[(a * n + i) * dim + b * n + j];
                        }
                    }
                }
            }
            let p: f64 = (0..n).map(|i| c[i * n + i].re).sum();
            if p < 1e-6 {
                continue;
            }
            let mut purity = 0.0;
            for i in 0..n {
                for j in 0..n {
                    purity += (c[i * n + j] * c[j * n + i]).re;
                }
            }
            worst = worst.min(purity / (p * p));
        }
        worst
    }

    fn hermitize(&mut self) {
        let dim = self.dim();
        for i in 0..dim {
            for j in i..dim {
                let a = 0.5 * (self.rho[i * dim + j] + self.rho[j * dim + i].conj());
                self.rho[i * dim + j] = a;
                self.rho[j * dim + i] = a.conj();
            }
        }
    }
}

/// Fourth-order Runge-Kutta integrator for the unconditional master equation.
struct Rk4 {
    model: JointModel,
    k: [Vec<C>; 4],
    stage: Vec<C>,
    tmp: Vec<C>,
}

impl Rk4 {
    fn new(model: JointModel) -> Self {
        let len = model.dim * model.dim;
        Rk4 { model, k: [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]], stage: vec![ZERO; len], tmp: vec![ZERO; len] }
    }

    fn step(&mut self, s: &mut JointState, dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        self.model.lindblad(&s.rho, k1, &mut self.tmp);
        for ((st, r), k) in self.stage.iter_mut().zip(&s.rho).zip(k1.iter()) {
            *st = r + k * (0.5 * dt);
        }
        self.model.lindblad(&self.stage, k2, &mut self.tmp);
        for ((st, r), k) in self.stage.iter_mut().zip(&s.rho).zip(k2.iter()) {
            *st = r + k * (0.5 * dt);
        }
        self.model.lindblad(&self.stage, k3, &mut self.tmp);
        for ((st, r), k) in self.stage.iter_mut().zip(&s.rho).zip(k3.iter()) {
            *st = r + k * dt;
        }
        self.model.lindblad(&self.stage, k4, &mut self.tmp);
        for (i, r) in s.rho.iter_mut().enumerate() {
            *r += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
}

/// Qubit Bloch vectors of the unconditional joint evolution sampled every
/// `sample_every` steps (including `t = 0`), with the largest top-level
/// population seen.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterRun {
    pub times: Vec<f64>,
    pub qubit: Vec<Bloch>,
    pub trace: Vec<f64>,
    pub max_top_population: f64,
    pub final_photons: f64,
}

/// Integrate the unconditional master equation from `qubit ⊗ |0⟩`.
pub fn evolve_master(
    params: &CavityParams,
    qubit: &QubitState,
    drive: f64,
    duration: f64,
    dt: f64,
    sample_every: usize,
) -> Result<MasterRun> {
    params.validate()?;
    let steps = steps_for(duration, dt)?;
    let sample_every = sample_every.max(1);
    let mut rk = Rk4::new(JointModel::new(params, drive));
    let mut s = JointState::with_vacuum(qubit, params.fock_dim);
    let mut run = MasterRun { times: vec![0.0], qubit: vec![s.qubit()], trace: vec![s.trace()], max_top_population: 0.0, final_photons: 0.0 };
    for k in 1..=steps {
        rk.step(&mut s, dt);
        if k % sample_every == 0 || k == steps {
            let top = s.top_population();
            run.max_top_population = run.max_top_population.max(top);
            if top > TRUNCATION_LIMIT || !top.is_finite() {
                return Err(Error::TruncationLeak { population: top });
            }
            run.times.push(k as f64 * dt);
            run.qubit.push(s.qubit());
            run.trace.push(s.trace());
        }
    }
    run.final_photons = s.photons();
    Ok(run)
}

/// Default joint integration step (s).
pub const DEFAULT_DT: f64 = 0.2e-9;

/// Result of the rate and axis extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveFit {
    pub gamma_fit: f64,
    pub gamma_target: f64,
    /// Invariant axis angle in `[0, π)`.
    pub axis_fit: f64,
    pub truncation_max_pop: f64,
}

fn perpendicular(delta: f64) -> Bloch {
    Bloch::in_plane(1.0, delta + core::f64::consts::FRAC_PI_2)
}

/// Fit the coherence decay rate from the unconditional evolution of a state
/// orthogonal to `σ_δ`, ignoring the first `10/κ` of ring-up.
pub fn fit_dephasing_rate(params: &CavityParams, duration: f64, dt: f64) -> Result<(f64, f64)> {
    let q = QubitState::from_vector(perpendicular(params.delta))?;
    let run = evolve_master(params, &q, 0.0, duration, dt, 10)?;
    let axis = sigma_delta(params.delta).axis();
    let t0 = 10.0 / params.kappa;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (t, r) in run.times.iter().zip(&run.qubit) {
        let along = axis.dot(r);
        let c = sqrt((r.norm_sqr() - along * along).max(0.0));
        if *t >= t0 && c > 1e-9 {
            xs.push(*t);
            ys.push(log(c));
        }
    }
    if xs.len() < 2 {
        return Err(Error::FitFailed("window shorter than the ring-up".into()));
    }
    Ok((-linear_fit(&xs, &ys).0, run.max_top_population))
}

/// Axis left invariant by the back-action: prepare in-plane states at
/// `n_angles` angles over `[0, π)`, measure the squared mean deflection after
/// `duration`, and fit `a₀ + a cos 2θ + b sin 2θ`, whose minimum sits at the
/// invariant axis.
pub fn fit_invariant_axis(params: &CavityParams, n_angles: usize, duration: f64, dt: f64) -> Result<(f64, f64)> {
    if n_angles < 3 {
        return Err(Error::InvalidParameter { name: "n_angles", value: n_angles as f64 });
    }
    let runs = try_par_map(n_angles, |k| {
        let theta = core::f64::consts::PI * k as f64 / n_angles as f64;
        let r0 = Bloch::in_plane(1.0, theta);
        let run = evolve_master(params, &QubitState::from_vector(r0)?, 0.0, duration, dt, usize::MAX)?;
        let r1 = *run.qubit.last().expect("final sample");
        Ok::<_, Error>((theta, (r1 - r0).norm_sqr(), run.max_top_population))
    })?;
    // Orthogonality of cos 2θ and sin 2θ on the uniform grid gives the
    // least-squares coefficients directly.
    let (mut a, mut b, mut top) = (0.0, 0.0, 0.0f64);
    for &(theta, loss, t) in &runs {
        a += loss * libm::cos(2.0 * theta);
        b += loss * libm::sin(2.0 * theta);
        top = top.max(t);
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::FitFailed("no deflection at any preparation angle".into()));
    }
    let axis = 0.5 * atan2(-b, -a);
    let folded = libm::fmod(axis, core::f64::consts::PI);
    Ok((if folded < 0.0 { folded + core::f64::consts::PI } else { folded }, top))
}

/// Rate and invariant axis of the joint model against `2χ²n̄₀/κ`.
pub fn simulate_effective_hamiltonian(params: &CavityParams, duration: f64, dt: f64) -> Result<EffectiveFit> {
    params.validate()?;
    params.check_adiabatic()?;
    let (gamma_fit, top1) = fit_dephasing_rate(params, duration, dt)?;
    let (axis_fit, top2) = fit_invariant_axis(params, 12, duration.min(0.5e-6), dt)?;
    Ok(EffectiveFit { gamma_fit, gamma_target: params.gamma_target(), axis_fit, truncation_max_pop: top1.max(top2) })
}

/// Dephasing rate over one window of the ring-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingupWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub rate: f64,
    /// Window average of `Γ(1 − e^{−κt/2})`.
    pub expected: f64,
}

/// `Γ(1 − e^{−κt/2})` averaged over `[t1, t2]`.
pub fn ringup_envelope(gamma: f64, kappa: f64, t1: f64, t2: f64) -> f64 {
    if t2 <= t1 {
        return gamma * (1.0 - exp(-0.5 * kappa * t1));
    }
    gamma * (1.0 - 2.0 / (kappa * (t2 - t1)) * (exp(-0.5 * kappa * t1) - exp(-0.5 * kappa * t2)))
}

/// Instantaneous dephasing rate in consecutive windows of `window` starting
/// from the switch-on of the coupling with the cavity in vacuum.
pub fn ringup_check(params: &CavityParams, duration: f64, window: f64, dt: f64) -> Result<Vec<RingupWindow>> {
    let every = libm::round(window / dt) as usize;
    if every == 0 || libm::fabs(every as f64 * dt - window) > 1e-6 * window {
        return Err(Error::NotMultipleOfDt { time: window, dt });
    }
    if duration < 2.0 * window {
        return Err(Error::InvalidParameter { name: "window", value: window });
    }
    let q = QubitState::from_vector(perpendicular(params.delta))?;
    let run = evolve_master(params, &q, 0.0, duration, dt, every)?;
    let axis = sigma_delta(params.delta).axis();
    let coherence: Vec<f64> = run
        .qubit
        .iter()
        .map(|r| {
            let along = axis.dot(r);
            sqrt((r.norm_sqr() - along * along).max(0.0))
        })
        .collect();
    let gamma = params.gamma_target();
    Ok((1..run.times.len())
        .map(|k| {
            let (t1, t2) = (run.times[k - 1], run.times[k]);
            RingupWindow {
                t_start: t1,
                t_end: t2,
                rate: -(log(coherence[k]) - log(coherence[k - 1])) / (t2 - t1),
                expected: ringup_envelope(gamma, params.kappa, t1, t2),
            }
        })
        .collect())
}

/// Precession about `σ_δ` caused by a resonant cavity field of real amplitude
/// `a_lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakRotation {
    pub rate_fit: f64,
    /// `4g̃·Re ā_LO`
    pub rate_expected: f64,
}

pub fn lo_leakage_effect(params: &CavityParams, a_lo: f64, duration: f64, dt: f64) -> Result<LeakRotation> {
    let amp = 2.0 * params.g_tilde() / params.kappa + libm::fabs(a_lo);
    if params.fock_dim < CavityParams::min_fock_dim(amp) {
        return Err(Error::InvalidParameter { name: "a_lo", value: a_lo });
    }
    if libm::fabs(a_lo) > 0.1 * params.abar0.max(1e-300) {
        return Err(Error::InvalidParameter { name: "a_lo", value: a_lo });
    }
    let n = sigma_delta(params.delta).axis();
    let u = perpendicular(params.delta);
    let w = n.cross(&u);
    let q = QubitState::from_vector(u)?;
    // A resonant drive ε leaves the steady field 2ε/κ.
    let run = evolve_master(params, &q, 0.5 * params.kappa * a_lo, duration, dt, 10)?;
    let t0 = 10.0 / params.kappa;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (t, r) in run.times.iter().zip(&run.qubit) {
        if *t >= t0 {
            xs.push(*t);
            ys.push(atan2(w.dot(r), u.dot(r)));
        }
    }
    if xs.len() < 2 {
        return Err(Error::FitFailed("window shorter than the ring-up".into()));
    }
    Ok(LeakRotation { rate_fit: linear_fit(&xs, &ys).0, rate_expected: 4.0 * params.g_tilde() * a_lo })
}

/// One conditioned joint trajectory reduced to the qubit, with its homodyne
/// record rescaled to the single-channel signal convention.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    /// Reduced qubit state at every record time, starting at `t = 0`.
    pub qubit: Vec<Bloch>,
    pub record: MeasurementRecord,
    pub min_cavity_purity: f64,
    pub max_top_population: f64,
}

/// Homodyne unraveling of the joint model with a first-order positivity
/// preserving step: `ρ → MρM† + (1−η)LρL†dt` with
/// `M = 1 + K dt + √η L dy`, `L = √κ e^{iπ/2} d` and
/// `dy = √η⟨L + L†⟩dt + dW`. Records are averaged over blocks of
/// `record_dt` and divided by the ring-up factor at the block midpoint, so
/// that they filter with the ring-up option of the effective model.
pub fn simulate_joint_trajectory(
    params: &CavityParams,
    initial: &QubitState,
    duration: f64,
    dt: f64,
    record_dt: f64,
    seed: u64,
) -> Result<JointTrajectory> {
    params.validate()?;
    let block = libm::round(record_dt / dt) as usize;
    if block == 0 || libm::fabs(block as f64 * dt - record_dt) > 1e-6 * record_dt {
        return Err(Error::NotMultipleOfDt { time: record_dt, dt });
    }
    let n_rec = steps_for(duration, record_dt)?;
    let model = JointModel::new(params, 0.0);
    let dim = model.dim;
    let l = model.d.scaled(C::new(0.0, sqrt(params.kappa)));
    let l_dag = l.adjoint();
    let mut s = JointState::with_vacuum(initial, params.fock_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![ZERO; dim * dim];
    let mut y = vec![ZERO; dim * dim];
    let sqrt_eta = sqrt(params.eta);
    let gamma = params.gamma_target();
    let scale = sqrt(2.0 * params.eta * gamma);
    let mut qubit = Vec::with_capacity(n_rec + 1);
    qubit.push(s.qubit());
    let mut samples = Vec::with_capacity(n_rec);
    let (mut min_purity, mut max_top) = (1.0f64, 0.0f64);
    for k in 0..n_rec {
        let mut acc = 0.0;
        for _ in 0..block {
            // ⟨L + L†⟩ = 2 Re Tr[Lρ]
            let mut tr_l = ZERO;
            for &(i, j, a) in &l.entries {
                tr_l += a * s.rho[j * dim + i];
            }
            let dw: f64 = StandardNormal.sample(&mut rng);
            let dy = sqrt_eta * 2.0 * tr_l.re * dt + dw * sqrt(dt);
            acc += dy;
            let c = C::new(sqrt_eta * dy, 0.0);
            // x = Mρ
            x.copy_from_slice(&s.rho);
            model.k.left(&s.rho, dim, C::new(dt, 0.0), &mut x);
            l.left(&s.rho, dim, c, &mut x);
            // y = x M† + (1−η) dt LρL†
            y.copy_from_slice(&x);
            model.k_dag.right(&x, dim, C::new(dt, 0.0), &mut y);
            l_dag.right(&x, dim, c, &mut y);
            if params.eta < 1.0 {
                x.iter_mut().for_each(|v| *v = ZERO);
                l.left(&s.rho, dim, ONE, &mut x);
                l_dag.right(&x, dim, C::new((1.0 - params.eta) * dt, 0.0), &mut y);
            }
            let tr: f64 = (0..dim).map(|i| y[i * dim + i].re).sum();
            for (r, v) in s.rho.iter_mut().zip(&y) {
                *r = v / tr;
            }
        }
        s.hermitize();
        let top = s.top_population();
        if top > TRUNCATION_LIMIT || !top.is_finite() {
            return Err(Error::TruncationLeak { population: top });
        }
        max_top = max_top.max(top);
        min_purity = min_purity.min(s.conditional_cavity_purity(params.delta));
        let t_mid = (k as f64 + 0.5) * record_dt;
        let f = 1.0 - exp(-0.5 * params.kappa * t_mid);
        samples.push(acc / (scale * record_dt * f));
        qubit.push(s.qubit());
    }
    let record = MeasurementRecord { dt: record_dt, channels: vec![params.channel()?], samples: vec![samples], seed: Some(seed) };
    Ok(JointTrajectory { qubit, record, min_cavity_purity: min_purity, max_top_population: max_top })
}

/// Agreement between the joint model and the effective filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterComparison {
    pub mean_trace_distance: f64,
    pub max_trace_distance: f64,
    pub min_cavity_purity: f64,
    pub max_top_population: f64,
    pub n_traj: usize,
}

/// Feed joint-model records to the effective filter (with ring-up) and
/// compare the reduced qubit states at every record time.
pub fn filter_vs_joint(
    params: &CavityParams,
    initial: &QubitState,
    duration: f64,
    dt: f64,
    record_dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<FilterComparison> {
    if n_traj == 0 {
        return Err(Error::InsufficientData("no trajectories".into()));
    }
    params.check_adiabatic()?;
    let imperfections = ImperfectionParams { ringup_kappa: Some(params.kappa), ..Default::default() };
    let per = try_par_map(n_traj, |i| {
        let jt = simulate_joint_trajectory(params, initial, duration, dt, record_dt, trajectory_seed(seed, i as u64))?;
        let filtered = filter(initial, &jt.record, &imperfections)?;
        let dists: Vec<f64> =
            jt.qubit.iter().zip(&filtered.states).map(|(a, b)| 0.5 * a.distance(&b.bloch())).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let max = dists.iter().copied().fold(0.0, f64::max);
        Ok::<_, Error>((mean, max, jt.min_cavity_purity, jt.max_top_population))
    })?;
    let n = per.len() as f64;
    Ok(FilterComparison {
        mean_trace_distance: per.iter().map(|p| p.0).sum::<f64>() / n,
        max_trace_distance: per.iter().map(|p| p.1).fold(0.0, f64::max),
        min_cavity_purity: per.iter().map(|p| p.2).fold(1.0, f64::min),
        max_top_population: per.iter().map(|p| p.3).fold(0.0, f64::max),
        n_traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants;

    fn small(gamma: f64, delta: f64) -> CavityParams {
        let mut p = CavityParams::for_rate(constants::CHI1, constants::KAPPA1, gamma, delta, 20, constants::ETA1).unwrap();
        p.fock_dim = 20;
        p
    }

    #[test]
    fn trace_is_preserved() {
        let p = small(constants::GAMMA1, 0.4);
        let q = QubitState::from_bloch(0.0, 0.6, 0.8).unwrap();
        let run = evolve_master(&p, &q, 0.0, 0.2e-6, DEFAULT_DT, 100).unwrap();
        for tr in &run.trace {
            assert!((tr - 1.0).abs() < 1e-9 * 0.2, "trace {tr}");
        }
    }

    #[test]
    fn no_coupling_means_no_dephasing() {
        let mut p = small(constants::GAMMA1, 0.0);
        p.abar0 = 0.0;
        let q = QubitState::from_bloch(0.0, 1.0, 0.0).unwrap();
        let run = evolve_master(&p, &q, 0.0, 0.3e-6, DEFAULT_DT, 100).unwrap();
        assert!(run.qubit.last().unwrap().distance(&Bloch::new(0.0, 1.0, 0.0)) < 1e-12);
        assert!(run.final_photons < 1e-20);
    }

    #[test]
    fn sparse_products_match_dense() {
        let p = CavityParams { chi: 1.0, kappa: 3.0, abar0: 0.5, delta: 0.3, fock_dim: 17, eta: 0.5 };
        let m = JointModel::new(&p, 0.2);
        let dim = m.dim;
        let rho: Vec<C> = (0..dim * dim).map(|i| C::new((i % 7) as f64 - 3.0, (i % 5) as f64)).collect();
        let dense = |op: &SparseOp| {
            let mut a = vec![ZERO; dim * dim];
            for &(i, j, v) in &op.entries {
                a[i * dim + j] += v;
            }
            a
        };
        let k = dense(&m.k);
        let mut left = vec![ZERO; dim * dim];
        let mut right = vec![ZERO; dim * dim];
        m.k.left(&rho, dim, ONE, &mut left);
        m.k.right(&rho, dim, ONE, &mut right);
        for i in 0..dim {
            for j in 0..dim {
                let l: C = (0..dim).map(|t| k[i * dim + t] * rho[t * dim + j]).sum();
                let r: C = (0..dim).map(|t| rho[i * dim + t] * k[t * dim + j]).sum();
                assert!((l - left[i * dim + j]).norm() < 1e-12 && (r - right[i * dim + j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_rule_rejects_small_spaces() {
        let mut p = small(constants::GAMMA1, 0.0);
        p.fock_dim = 10;
        assert!(p.validate().is_err());
    }
}
