//! Qubit states, Pauli algebra and measurement axes.
//!
//! A [`QubitState`] keeps the 2×2 density matrix as its primary data; Bloch
//! coordinates are derived on demand. Measurement axes live in the xy-plane
//! of the dressed frame, `σ_δ = σx cos δ + σy sin δ`.

use core::ops::{Add, Mul, Neg, Sub};

use libm::{cos, fabs, sin, sqrt};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on the Bloch radius when validating states.
pub const BALL_TOLERANCE: f64 = 1e-9;
/// Most negative eigenvalue still accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-10;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I1: Complex64 = Complex64::new(0.0, 1.0);

/// 2×2 complex matrix, row major.
pub type Mat2 = [[Complex64; 2]; 2];

pub const IDENTITY: Mat2 = [[C1, C0], [C0, C1]];
pub const SIGMA_X: Mat2 = [[C0, C1], [C1, C0]];
pub const SIGMA_Y: Mat2 = [[C0, Complex64::new(0.0, -1.0)], [I1, C0]];
pub const SIGMA_Z: Mat2 = [[C1, C0], [C0, Complex64::new(-1.0, 0.0)]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[C0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

pub fn mat_scale(a: &Mat2, s: Complex64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn dagger(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn trace(a: &Mat2) -> Complex64 {
    a[0][0] + a[1][1]
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    mat_sub(&mat_mul(a, b), &mat_mul(b, a))
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
pub fn hermitian_eigenvalues(a: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (a[0][0].re + a[1][1].re);
    let half_diff = 0.5 * (a[0][0].re - a[1][1].re);
    let off = a[0][1].norm_sqr();
    let spread = sqrt(half_diff * half_diff + off);
    [mean - spread, mean + spread]
}

/// Real three-vector of Pauli expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bloch {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Bloch {
    pub const ORIGIN: Bloch = Bloch { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Bloch { x, y, z }
    }

    /// Unit vector in the xy-plane at angle `phi` from +x.
    pub fn in_plane(radius: f64, phi: f64) -> Self {
        Bloch::new(radius * cos(phi), radius * sin(phi), 0.0)
    }

    pub fn dot(&self, other: &Bloch) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, o: &Bloch) -> Bloch {
        Bloch::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.norm_sqr())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Rotation about +z by `phi`.
    pub fn rotate_z(&self, phi: f64) -> Bloch {
        let (s, c) = (sin(phi), cos(phi));
        Bloch::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    /// Rotation by `angle` about the unit axis `axis` (right-handed).
    pub fn rotate_about(&self, axis: &Bloch, angle: f64) -> Bloch {
        let (s, c) = (sin(angle), cos(angle));
        let along = axis.dot(self);
        *self * c + axis.cross(self) * s + *axis * (along * (1.0 - c))
    }

    pub fn distance(&self, other: &Bloch) -> f64 {
        (*self - *other).norm()
    }
}

impl Add for Bloch {
    type Output = Bloch;
    fn add(self, o: Bloch) -> Bloch {
        Bloch::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Bloch {
    type Output = Bloch;
    fn sub(self, o: Bloch) -> Bloch {
        Bloch::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Bloch {
    type Output = Bloch;
    fn mul(self, s: f64) -> Bloch {
        Bloch::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Bloch {
    type Output = Bloch;
    fn neg(self) -> Bloch {
        Bloch::new(-self.x, -self.y, -self.z)
    }
}

/// A single-qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    rho: Mat2,
}

impl QubitState {
    /// `ρ = (I + xσx + yσy + zσz)/2`. Rejects vectors outside the closed ball.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let radius = sqrt(x * x + y * y + z * z);
        if !(radius <= 1.0 + BALL_TOLERANCE) {
            return Err(Error::OutsideBlochBall { radius });
        }
        Ok(Self::from_bloch_unchecked(Bloch::new(x, y, z)))
    }

    pub fn from_vector(b: Bloch) -> Result<Self> {
        Self::from_bloch(b.x, b.y, b.z)
    }

    pub(crate) fn from_bloch_unchecked(b: Bloch) -> Self {
        let h = 0.5;
        QubitState {
            rho: [
                [Complex64::new(h * (1.0 + b.z), 0.0), Complex64::new(h * b.x, -h * b.y)],
                [Complex64::new(h * b.x, h * b.y), Complex64::new(h * (1.0 - b.z), 0.0)],
            ],
        }
    }

    pub fn maximally_mixed() -> Self {
        Self::from_bloch_unchecked(Bloch::ORIGIN)
    }

    /// Validates trace, hermiticity and positivity before accepting `rho`.
    pub fn from_matrix(rho: Mat2) -> Result<Self> {
        let tr = trace(&rho);
        if fabs(tr.re - 1.0) > 1e-12 || fabs(tr.im) > 1e-12 {
            return Err(Error::InvalidState(alloc::format!("trace {tr}")));
        }
        let adj = dagger(&rho);
        for i in 0..2 {
            for j in 0..2 {
                if (rho[i][j] - adj[i][j]).norm() > 1e-12 {
                    return Err(Error::InvalidState("not Hermitian".into()));
                }
            }
        }
        let min = hermitian_eigenvalues(&rho)[0];
        if min < -PSD_TOLERANCE {
            return Err(Error::InvalidState(alloc::format!("eigenvalue {min}")));
        }
        Ok(QubitState { rho })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }

    pub fn bloch(&self) -> Bloch {
        let r = &self.rho;
        Bloch::new(
            r[0][1].re + r[1][0].re,
            r[1][0].im - r[0][1].im,
            r[0][0].re - r[1][1].re,
        )
    }

    pub fn purity(&self) -> f64 {
        let r = &self.rho;
        let mut acc = 0.0;
        for row in r {
            for v in row {
                acc += v.norm_sqr();
            }
        }
        acc
    }

    /// `(Tr ρ², |r|)`.
    pub fn purity_radius(&self) -> (f64, f64) {
        (self.purity(), self.bloch().norm())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.rho)[0]
    }

    /// Trace distance `½‖ρ−σ‖₁`; for qubits half the Bloch distance.
    pub fn trace_distance(&self, other: &QubitState) -> f64 {
        0.5 * self.bloch().distance(&other.bloch())
    }

    /// Row-major re/im interleaved serialization.
    pub fn to_reals(&self) -> [f64; 8] {
        let r = &self.rho;
        [
            r[0][0].re, r[0][0].im, r[0][1].re, r[0][1].im, r[1][0].re, r[1][0].im, r[1][1].re,
            r[1][1].im,
        ]
    }

    pub fn from_reals(v: &[f64; 8]) -> Result<Self> {
        Self::from_matrix([
            [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
            [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
        ])
    }

    /// Convex combination `a·self + (1−a)·other`.
    pub fn mix(&self, other: &QubitState, a: f64) -> QubitState {
        let m = mat_add(
            &mat_scale(&self.rho, Complex64::new(a, 0.0)),
            &mat_scale(&other.rho, Complex64::new(1.0 - a, 0.0)),
        );
        QubitState { rho: m }
    }
}

/// A traceless, unit-norm observable `σ_δ` in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable {
    pub delta: f64,
    pub matrix: Mat2,
}

impl Observable {
    pub fn axis(&self) -> Bloch {
        Bloch::in_plane(1.0, self.delta)
    }
}

/// `σ_δ ≡ σx cos δ + σy sin δ`.
pub fn sigma_delta(delta: f64) -> Observable {
    let (s, c) = (sin(delta), cos(delta));
    Observable {
        delta,
        matrix: [[C0, Complex64::new(c, -s)], [Complex64::new(c, s), C0]],
    }
}

/// `Tr[ρ σ_δ]`.
pub fn expectation(state: &QubitState, obs: &Observable) -> f64 {
    trace(&mat_mul(state.matrix(), &obs.matrix)).re
}

/// Configuration of one continuous measurement channel.
///
/// `gamma` is the angular dephasing rate in s⁻¹. A channel with `eta == 0`
/// only dephases; it must be marked `dephasing_only` to take part in record
/// generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasChannel {
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub dephasing_only: bool,
}

impl MeasChannel {
    pub fn new(delta: f64, gamma: f64, eta: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter { name: "gamma", value: gamma });
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter { name: "eta", value: eta });
        }
        if !delta.is_finite() {
            return Err(Error::InvalidParameter { name: "delta", value: delta });
        }
        Ok(MeasChannel { delta, gamma, eta, dephasing_only: false })
    }

    /// An unmonitored channel that only dephases at rate `gamma`.
    pub fn dephasing(delta: f64, gamma: f64) -> Result<Self> {
        let mut ch = Self::new(delta, gamma, 0.0)?;
        ch.dephasing_only = true;
        Ok(ch)
    }

    pub fn axis(&self) -> Bloch {
        Bloch::in_plane(1.0, self.delta)
    }

    pub fn observable(&self) -> Observable {
        sigma_delta(self.delta)
    }

    /// Informational rate `Γη`.
    pub fn measurement_rate(&self) -> f64 {
        self.gamma * self.eta
    }

    /// Copy with the axis rotated by `phi`.
    pub fn rotated(&self, phi: f64) -> Self {
        MeasChannel { delta: self.delta + phi, ..*self }
    }
}
