//! Pauli-transfer representation of single-qubit linear maps.
//!
//! A state `ρ = (q₀ I + q·σ)/2` is the real four-vector `(q₀, qx, qy, qz)`;
//! `Tr ρ = q₀`. Every Hermiticity-preserving map is a real 4×4 matrix acting
//! on that vector.

use libm::{cos, cosh, exp, sin, sinh, sqrt};
use num_complex::Complex64;

use crate::linalg;
use crate::state::Bloch;

pub type Mat4 = [[f64; 4]; 4];

pub const IDENTITY4: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

pub fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn apply4(a: &Mat4, q: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = a[i][0] * q[0] + a[i][1] * q[1] + a[i][2] * q[2] + a[i][3] * q[3];
    }
    out
}

/// Conjugation `ρ ↦ e^{b·σ} ρ e^{b·σ}` for a real vector `b`.
pub fn exp_sandwich(b: &Bloch) -> Mat4 {
    let beta = b.norm();
    if beta == 0.0 {
        return IDENTITY4;
    }
    let n = *b * (1.0 / beta);
    let ch = cosh(2.0 * beta);
    let sh = sinh(2.0 * beta);
    let s2 = 2.0 * sinh(beta) * sinh(beta);
    let v = [n.x, n.y, n.z];
    let mut m = [[0.0; 4]; 4];
    m[0][0] = ch;
    for i in 0..3 {
        m[0][i + 1] = sh * v[i];
        m[i + 1][0] = sh * v[i];
        for j in 0..3 {
            m[i + 1][j + 1] = s2 * v[i] * v[j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    m
}

/// Embed a linear map on the Bloch vector (trace fixed) into a transfer matrix.
pub fn from_bloch_linear(r: &[[f64; 3]; 3]) -> Mat4 {
    let mut m = IDENTITY4;
    for i in 0..3 {
        for j in 0..3 {
            m[i + 1][j + 1] = r[i][j];
        }
    }
    m
}

/// In-plane dephasing for a set of axes: the Bloch components orthogonal to
/// axis `n_i` decay at rate `k_i`, all generators applied jointly for `dt`.
pub fn joint_dephasing(axes: &[(f64, f64)], dt: f64) -> [[f64; 3]; 3] {
    // (delta_i, rate_i). Generator on (x, y): −Σ k (I − n nᵀ); on z: −Σ k.
    let (mut p, mut q, mut s, mut kz) = (0.0, 0.0, 0.0, 0.0);
    for &(delta, k) in axes {
        let (sn, cs) = (sin(delta), cos(delta));
        p -= k * sn * sn;
        q += k * sn * cs;
        s -= k * cs * cs;
        kz += k;
    }
    let (p, q, s) = (p * dt, q * dt, s * dt);
    let mean = 0.5 * (p + s);
    let half = 0.5 * (p - s);
    let d = sqrt(half * half + q * q);
    let em = exp(mean);
    let (c, sh_over_d) = if d > 1e-12 {
        (cosh(d), sinh(d) / d)
    } else {
        (1.0 + 0.5 * d * d, 1.0 + d * d / 6.0)
    };
    [
        [em * (c + sh_over_d * half), em * sh_over_d * q, 0.0],
        [em * sh_over_d * q, em * (c - sh_over_d * half), 0.0],
        [0.0, 0.0, exp(-kz * dt)],
    ]
}

/// Rotation matrix about `axis` (unit) by `angle`.
pub fn rotation(axis: &Bloch, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = (sin(angle), cos(angle));
    let t = 1.0 - c;
    let (x, y, z) = (axis.x, axis.y, axis.z);
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

pub fn apply3(m: &[[f64; 3]; 3], v: &Bloch) -> Bloch {
    Bloch::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

pub fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// Amplitude damping toward `z = −1` for a step `dt` at rate `1/t1`.
pub fn amplitude_damping(t1: f64, dt: f64) -> Mat4 {
    let e = exp(-dt / t1);
    let h = exp(-0.5 * dt / t1);
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, h, 0.0, 0.0],
        [0.0, 0.0, h, 0.0],
        [-(1.0 - e), 0.0, 0.0, e],
    ]
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` in row-major 4×4 complex form.
pub fn choi(m: &Mat4) -> [Complex64; 16] {
    let zero = Complex64::new(0.0, 0.0);
    // Pauli coordinates of |i⟩⟨j| split into real and imaginary parts.
    let units: [[[f64; 4]; 2]; 4] = [
        [[1.0, 0.0, 0.0, 1.0], [0.0; 4]],   // |0⟩⟨0|
        [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]], // |0⟩⟨1|
        [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0]], // |1⟩⟨0|
        [[1.0, 0.0, 0.0, -1.0], [0.0; 4]],  // |1⟩⟨1|
    ];
    let mut c = [zero; 16];
    for i in 0..2 {
        for j in 0..2 {
            let [re, im] = units[2 * i + j];
            let out_re = apply4(m, &re);
            let out_im = apply4(m, &im);
            let q: [Complex64; 4] =
                core::array::from_fn(|k| Complex64::new(out_re[k], out_im[k]));
            let ii = Complex64::new(0.0, 1.0);
            let half = Complex64::new(0.5, 0.0);
            let mat = [
                [(q[0] + q[3]) * half, (q[1] - ii * q[2]) * half],
                [(q[1] + ii * q[2]) * half, (q[0] - q[3]) * half],
            ];
            for a in 0..2 {
                for b in 0..2 {
                    c[(2 * i + a) * 4 + (2 * j + b)] = mat[a][b];
                }
            }
        }
    }
    c
}

/// Smallest Choi eigenvalue relative to the largest absolute entry.
pub fn choi_min_eigenvalue(m: &Mat4) -> f64 {
    let c = choi(m);
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let scaled: alloc::vec::Vec<Complex64> = c.iter().map(|z| *z / scale).collect();
    linalg::hermitian_eigenvalues(4, &scaled)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_sandwich_matches_matrix_product() {
        use crate::state::{mat_add, mat_mul, mat_scale, IDENTITY, SIGMA_X, SIGMA_Y};
        let b = Bloch::new(0.3, -0.4, 0.0);
        let beta = b.norm();
        let n = b * (1.0 / beta);
        let m = mat_add(
            &mat_scale(&IDENTITY, Complex64::new(libm::cosh(beta), 0.0)),
            &mat_add(
                &mat_scale(&SIGMA_X, Complex64::new(libm::sinh(beta) * n.x, 0.0)),
                &mat_scale(&SIGMA_Y, Complex64::new(libm::sinh(beta) * n.y, 0.0)),
            ),
        );
        let rho = crate::state::QubitState::from_bloch(0.2, 0.5, -0.3).unwrap();
        let out = mat_mul(&mat_mul(&m, rho.matrix()), &m);
        let q = apply4(&exp_sandwich(&b), &[1.0, 0.2, 0.5, -0.3]);
        let tr = out[0][0].re + out[1][1].re;
        assert!((tr - q[0]).abs() < 1e-13);
        assert!((out[0][1].re + out[1][0].re - q[1]).abs() < 1e-13);
        assert!((out[1][0].im - out[0][1].im - q[2]).abs() < 1e-13);
        assert!((out[0][0].re - out[1][1].re - q[3]).abs() < 1e-13);
    }

    #[test]
    fn identity_choi_is_rank_one_psd() {
        let c = choi(&IDENTITY4);
        let ev = linalg::hermitian_eigenvalues(4, &c);
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transpose_is_not_cp() {
        // y ↦ −y is the transpose map.
        let mut t = IDENTITY4;
        t[2][2] = -1.0;
        assert!(choi_min_eigenvalue(&t) < -0.1);
    }

    #[test]
    fn joint_dephasing_single_axis() {
        let m = joint_dephasing(&[(0.0, 2.0)], 0.5);
        assert!((m[0][0] - 1.0).abs() < 1e-14);
        assert!((m[1][1] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((m[2][2] - (-1.0f64).exp()).abs() < 1e-14);
        assert!(m[0][1].abs() < 1e-14);
    }
}
