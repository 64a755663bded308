//! Two-mode effective Hamiltonian after adiabatic elimination of |3⟩.
//!
//! Basis order here is `(a, S)` (photon first). In that basis
//!
//! ```text
//! h = -1/(Δ - iκ₁₃) · [[g²N, g√N Ω_c], [g√N Ω_c, Ω_c²]]
//! ```
//!
//! The overall sign makes `exp(-i h τ)` dissipative for κ₁₃ > 0. The
//! coupling is symmetric, so `h` is Hermitian exactly when κ₁₃ = 0 and the
//! dark combination `(Ω_c, -g√N)` is a zero mode.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::transfer::{ModeAmplitudes, MpbsParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveHamiltonian {
    h: Matrix2<Complex64>,
    validity_warning: bool,
}

pub fn build_heff(params: &MpbsParams) -> Result<EffectiveHamiltonian> {
    params.validate()?;
    EffectiveHamiltonian::new(params.delta, params.kappa13, params.g_root_n, params.rabi_c)
}

impl EffectiveHamiltonian {
    /// Unlike [`build_heff`], allows κ₁₃ = 0 (the Hermitian limit) as long as Δ ≠ 0.
    pub fn new(delta: f64, kappa13: f64, g_root_n: f64, rabi_c: f64) -> Result<Self> {
        for (name, x) in [
            ("delta", delta),
            ("kappa13", kappa13),
            ("g_root_n", g_root_n),
            ("rabi_c", rabi_c),
        ] {
            if !x.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if kappa13 < 0.0 {
            return Err(invalid("kappa13", "must be >= 0"));
        }
        if delta == 0.0 && kappa13 == 0.0 {
            return Err(invalid("delta", "Δ and κ₁₃ cannot both vanish"));
        }
        let pref = -1.0 / Complex64::new(delta, -kappa13);
        let g = g_root_n;
        let w = rabi_c;
        let h = Matrix2::new(
            pref * (g * g),
            pref * (g * w),
            pref * (g * w),
            pref * (w * w),
        );
        let strongest = g.max(w);
        let validity_warning = strongest * strongest > 0.1 * (delta * delta + kappa13 * kappa13);
        Ok(EffectiveHamiltonian {
            h,
            validity_warning,
        })
    }

    pub fn from_matrix(h: Matrix2<Complex64>) -> Self {
        EffectiveHamiltonian {
            h,
            validity_warning: false,
        }
    }

    /// Matrix in `(a, S)` order, rad/s.
    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.h
    }

    /// Adiabatic elimination is questionable: max(g√N, Ω_c)² > 0.1 (Δ² + κ₁₃²).
    pub fn validity_warning(&self) -> bool {
        self.validity_warning
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.h - self.h.adjoint()).norm() <= tol * self.h.norm().max(f64::MIN_POSITIVE)
    }

    /// `U = exp(-i h τ)` in `(a, S)` order.
    pub fn propagator(&self, tau: f64) -> Result<Matrix2<Complex64>> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(invalid("tau", "must be finite and >= 0"));
        }
        Ok(expm2(&(self.h * Complex64::new(0.0, -tau))))
    }

    pub fn evolve(&self, state: ModeAmplitudes, tau: f64) -> Result<ModeAmplitudes> {
        let u = self.propagator(tau)?;
        let out = u * Vector2::new(state.a, state.s);
        Ok(ModeAmplitudes::new(out[1], out[0]))
    }
}

/// Exact exponential of a 2×2 complex matrix.
///
/// With eigenvalues `m ± s`, `exp(M) = e^m (cosh(s) I + sinh(s)/s (M - m I))`.
/// At `s = 0` (defective or scalar case) this is `e^m (I + (M - m I))`.
pub fn expm2(m: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let shifted = m - Matrix2::identity() * mean;
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let s = (half_diff * half_diff + m[(0, 1)] * m[(1, 0)]).sqrt();
    let (cosh, sinhc) = if s.norm() < 1e-4 {
        let s2 = s * s;
        (
            1.0 + s2 * (0.5 + s2 * (1.0 / 24.0 + s2 / 720.0)),
            1.0 + s2 * (1.0 / 6.0 + s2 * (1.0 / 120.0 + s2 / 5040.0)),
        )
    } else {
        (s.cosh(), s.sinh() / s)
    };
    (Matrix2::identity() * cosh + shifted * sinhc) * mean.exp()
}

/// Swap a 2×2 operator between the `(a, S)` and `(S, a)` orderings.
pub fn to_transfer_basis(u: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    Matrix2::new(u[(1, 1)], u[(1, 0)], u[(0, 1)], u[(0, 0)])
}

/// Frobenius norm of `U†U - I`.
pub fn unitarity_deviation(u: &Matrix2<Complex64>) -> f64 {
    (u.adjoint() * u - Matrix2::identity()).norm()
}
