//! Closed-form transfer matrix of the non-Hermitian magnon-photon beam splitter.
//!
//! Amplitudes are ordered `(S, a)`: magnon first, photon second. A square
//! probe pulse of duration `tau_p` maps
//!
//! ```text
//! (S(tau_p), a(L)) = [[t, r], [r', t']] · (S(0), a(0))
//! ```
//!
//! with `t = exp(-ζ / (i Δ/κ₁₃ + 1))`, `r = t - 1`, `r' = (η/ζ) r` and
//! `t' = 1 - (η/ζ)(1 - t)`.

use std::f64::consts::TAU;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::wrap_phase;

/// Physical knobs of the splitter. All frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpbsParams {
    /// Single-photon detuning Δ.
    pub delta: f64,
    /// Dephasing rate κ₁₃ between |3⟩ and |1⟩.
    pub kappa13: f64,
    /// Control Rabi frequency Ω_c.
    pub rabi_c: f64,
    /// Collective atom-photon coupling g√N.
    pub g_root_n: f64,
    /// Probe pulse duration τ_p in seconds.
    pub tau_p: f64,
    /// Optical depth.
    pub od: f64,
    /// Calibration β in η = β·OD.
    pub eta_per_od: f64,
}

impl Default for MpbsParams {
    fn default() -> Self {
        MpbsParams {
            delta: TAU * 30e6,
            kappa13: TAU * 3e6,
            rabi_c: TAU * 5e6,
            g_root_n: TAU * 5e6,
            tau_p: 50e-9,
            od: 40.0,
            eta_per_od: 0.05,
        }
    }
}

fn finite(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {x}")))
    }
}

impl MpbsParams {
    pub fn validate(&self) -> Result<()> {
        finite("delta", self.delta)?;
        finite("kappa13", self.kappa13)?;
        finite("rabi_c", self.rabi_c)?;
        finite("g_root_n", self.g_root_n)?;
        finite("tau_p", self.tau_p)?;
        finite("od", self.od)?;
        finite("eta_per_od", self.eta_per_od)?;
        if self.kappa13 <= 0.0 {
            return Err(invalid("kappa13", "must be > 0"));
        }
        if self.tau_p <= 0.0 {
            return Err(invalid("tau_p", "must be > 0"));
        }
        if self.od < 0.0 {
            return Err(invalid("od", "must be >= 0"));
        }
        if self.eta_per_od <= 0.0 {
            return Err(invalid("eta_per_od", "must be > 0"));
        }
        if self.rabi_c < 0.0 {
            return Err(invalid("rabi_c", "must be >= 0"));
        }
        if self.g_root_n < 0.0 {
            return Err(invalid("g_root_n", "must be >= 0"));
        }
        Ok(())
    }

    pub fn with_od(self, od: f64) -> Self {
        MpbsParams { od, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        MpbsParams { delta, ..self }
    }
}

/// Dimensionless strengths entering the transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessCoupling {
    /// Beam-splitter interaction strength ζ = Ω_c² τ_p / κ₁₃.
    pub zeta: f64,
    /// OD-dependent strength η.
    pub eta: f64,
    /// Δ / κ₁₃.
    pub delta_ratio: f64,
}

impl DimensionlessCoupling {
    pub fn new(zeta: f64, eta: f64, delta_ratio: f64) -> Result<Self> {
        finite("zeta", zeta)?;
        finite("eta", eta)?;
        finite("delta_ratio", delta_ratio)?;
        if zeta < 0.0 {
            return Err(invalid("zeta", "must be >= 0"));
        }
        if eta < 0.0 {
            return Err(invalid("eta", "must be >= 0"));
        }
        Ok(DimensionlessCoupling {
            zeta,
            eta,
            delta_ratio,
        })
    }

    /// Ratio η/ζ, taken as 0 when both vanish.
    pub fn eta_over_zeta(&self) -> f64 {
        if self.zeta == 0.0 {
            0.0
        } else {
            self.eta / self.zeta
        }
    }
}

pub fn derive_dimensionless(params: &MpbsParams) -> Result<DimensionlessCoupling> {
    params.validate()?;
    let zeta = params.rabi_c * params.rabi_c * params.tau_p / params.kappa13;
    let eta = params.eta_per_od * params.od;
    DimensionlessCoupling::new(zeta, eta, params.delta / params.kappa13)
}

/// Complex pair `(S, a)`: magnon amplitude and photon pulse amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeAmplitudes {
    pub s: Complex64,
    pub a: Complex64,
}

impl ModeAmplitudes {
    pub fn new(s: Complex64, a: Complex64) -> Self {
        ModeAmplitudes { s, a }
    }

    pub fn n_s(&self) -> f64 {
        self.s.norm_sqr()
    }

    pub fn n_a(&self) -> f64 {
        self.a.norm_sqr()
    }

    pub fn total(&self) -> f64 {
        self.n_s() + self.n_a()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub t: Complex64,
    pub r: Complex64,
    pub r_prime: Complex64,
    pub t_prime: Complex64,
}

pub fn build_transfer_matrix(c: &DimensionlessCoupling) -> Result<TransferMatrix> {
    TransferMatrix::from_coupling(c)
}

/// First-order far-detuned expansion `[[1 + iζ/Δr, iζ/Δr], [iη/Δr, 1 + iη/Δr]]`.
///
/// Only meant for checking the Hermitian limit; differs from the exact matrix
/// at order `(κ₁₃/Δ)²`.
pub fn asymptotic_transfer_matrix(c: &DimensionlessCoupling) -> Result<TransferMatrix> {
    if c.delta_ratio == 0.0 {
        return Err(invalid(
            "delta_ratio",
            "asymptotic expansion needs Δ/κ₁₃ != 0",
        ));
    }
    let r = Complex64::new(0.0, c.zeta / c.delta_ratio);
    let r_prime = Complex64::new(0.0, c.eta / c.delta_ratio);
    Ok(TransferMatrix {
        t: 1.0 + r,
        r,
        r_prime,
        t_prime: 1.0 + r_prime,
    })
}

impl TransferMatrix {
    pub fn identity() -> Self {
        TransferMatrix {
            t: Complex64::new(1.0, 0.0),
            r: Complex64::new(0.0, 0.0),
            r_prime: Complex64::new(0.0, 0.0),
            t_prime: Complex64::new(1.0, 0.0),
        }
    }

    pub fn from_coupling(c: &DimensionlessCoupling) -> Result<Self> {
        if c.zeta == 0.0 {
            if c.eta > 0.0 {
                return Err(invalid("eta", "η > 0 with ζ = 0 leaves η/ζ undefined"));
            }
            return Ok(Self::identity());
        }
        let k = c.eta / c.zeta;
        let t = (-c.zeta / Complex64::new(1.0, c.delta_ratio)).exp();
        let r = t - 1.0;
        Ok(TransferMatrix {
            t,
            r,
            r_prime: k * r,
            t_prime: 1.0 - k * (1.0 - t),
        })
    }

    /// Dense form in `(S, a)` order.
    pub fn as_matrix(&self) -> Matrix2<Complex64> {
        Matrix2::new(self.t, self.r, self.r_prime, self.t_prime)
    }

    pub fn from_matrix(m: &Matrix2<Complex64>) -> Self {
        TransferMatrix {
            t: m[(0, 0)],
            r: m[(0, 1)],
            r_prime: m[(1, 0)],
            t_prime: m[(1, 1)],
        }
    }

    pub fn apply(&self, input: ModeAmplitudes) -> ModeAmplitudes {
        ModeAmplitudes {
            s: self.t * input.s + self.r * input.a,
            a: self.r_prime * input.s + self.t_prime * input.a,
        }
    }

    /// Fringe phase difference `(arg r - arg t) - (arg t' - arg r')` in `(-π, π]`.
    ///
    /// Returns `None` when any element vanishes.
    pub fn fringe_phase_difference(&self) -> Option<f64> {
        if self.is_degenerate() {
            return None;
        }
        let raw = (self.r.arg() - self.t.arg()) - (self.t_prime.arg() - self.r_prime.arg());
        Some(wrap_phase(raw))
    }

    fn is_degenerate(&self) -> bool {
        let zero = Complex64::new(0.0, 0.0);
        self.r == zero || self.r_prime == zero || self.t == zero || self.t_prime == zero
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let m = self.as_matrix();
        (m.adjoint() * m - Matrix2::identity()).norm()
    }

    pub fn singular_values(&self) -> [f64; 2] {
        let m = self.as_matrix();
        let p = m.adjoint() * m;
        let a = p[(0, 0)].re;
        let d = p[(1, 1)].re;
        let tr = a + d;
        let disc = ((a - d) * (a - d) + 4.0 * p[(0, 1)].norm_sqr()).sqrt();
        let hi = 0.5 * (tr + disc);
        let lo = (0.5 * (tr - disc)).max(0.0);
        [hi.sqrt(), lo.sqrt()]
    }

    pub fn diagnostics(&self) -> MatrixDiagnostics {
        let singular_values = self.singular_values();
        let (eigenvalues, eigenvectors) = eigen2(&self.as_matrix());
        let phase = self.fringe_phase_difference();
        MatrixDiagnostics {
            unitarity_deviation: self.unitarity_deviation(),
            spectral_norm: singular_values[0],
            singular_values,
            eigenvalues,
            eigenvectors,
            fringe_phase_difference: phase.unwrap_or(0.0),
            reflection_phase: self.r.arg(),
            degenerate: phase.is_none(),
            gain_regime: singular_values[0] > 1.0 + 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixDiagnostics {
    /// Frobenius norm of `T†T - I`.
    pub unitarity_deviation: f64,
    pub spectral_norm: f64,
    /// Singular values, largest first.
    pub singular_values: [f64; 2],
    pub eigenvalues: [Complex64; 2],
    /// Unit eigenvectors matching `eigenvalues`, in `(S, a)` order.
    pub eigenvectors: [[Complex64; 2]; 2],
    /// Δψ in `(-π, π]`; 0 when `degenerate`.
    pub fringe_phase_difference: f64,
    /// arg(r).
    pub reflection_phase: f64,
    /// Some element is zero, so Δψ carries no information.
    pub degenerate: bool,
    /// Spectral norm above 1: the parameters describe a non-passive splitter.
    pub gain_regime: bool,
}

impl MatrixDiagnostics {
    /// Δψ folded to `[0, π]`, the quantity an unordered Lissajous scatter reveals.
    pub fn two_phi(&self) -> f64 {
        self.fringe_phase_difference.abs()
    }
}

/// Exact eigendecomposition of a 2×2 complex matrix.
pub(crate) fn eigen2(m: &Matrix2<Complex64>) -> ([Complex64; 2], [[Complex64; 2]; 2]) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let root = (half_diff * half_diff + b * c).sqrt();
    let lambdas = [mean + root, mean - root];
    let mut vecs = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (k, &lam) in lambdas.iter().enumerate() {
        let v1 = [b, lam - a];
        let v2 = [lam - d, c];
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let n2 = v2[0].norm_sqr() + v2[1].norm_sqr();
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        vecs[k] = if n > 0.0 {
            let s = n.sqrt();
            [v[0] / s, v[1] / s]
        } else if k == 0 {
            // scalar matrix: any basis works
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
    }
    (lambdas, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_control_gives_zero_coupling() {
        let p = MpbsParams {
            rabi_c: 0.0,
            od: 0.0,
            ..MpbsParams::default()
        };
        let d = derive_dimensionless(&p).unwrap();
        assert_eq!(d.zeta, 0.0);
        assert_eq!(d.eta, 0.0);
    }

    #[test]
    fn zeta_from_physical_units() {
        let p = MpbsParams {
            rabi_c: TAU * 1e6,
            tau_p: 50e-9,
            kappa13: TAU * 3e6,
            ..MpbsParams::default()
        };
        let d = derive_dimensionless(&p).unwrap();
        // 30-digit evaluation: 0.104719755119659774615421446109 (= π/30)
        assert!((d.zeta - 0.104_719_755_119_659_77).abs() < 1e-15);
    }

    #[test]
    fn eta_is_linear_in_od() {
        let p = MpbsParams {
            od: 40.0,
            eta_per_od: 0.05,
            ..MpbsParams::default()
        };
        assert!((derive_dimensionless(&p).unwrap().eta - 2.0).abs() < 1e-15);
    }

    #[test]
    fn params_rejected() {
        let base = MpbsParams::default();
        for (p, name) in [
            (
                MpbsParams {
                    kappa13: 0.0,
                    ..base
                },
                "kappa13",
            ),
            (
                MpbsParams {
                    tau_p: -1.0,
                    ..base
                },
                "tau_p",
            ),
            (MpbsParams { od: -1.0, ..base }, "od"),
            (
                MpbsParams {
                    eta_per_od: 0.0,
                    ..base
                },
                "eta_per_od",
            ),
        ] {
            match derive_dimensionless(&p) {
                Err(crate::MpbsError::InvalidParameter { name: n, .. }) => assert_eq!(n, name),
                other => panic!("expected error for {name}, got {other:?}"),
            }
        }
    }

    #[test]
    fn no_interaction_is_identity() {
        let m = build_transfer_matrix(&DimensionlessCoupling::new(0.0, 0.0, 3.0).unwrap()).unwrap();
        assert_eq!(m, TransferMatrix::identity());
        let err = build_transfer_matrix(&DimensionlessCoupling::new(0.0, 0.1, 3.0).unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn balanced_resonant_splitter() {
        let m =
            build_transfer_matrix(&DimensionlessCoupling::new(LN_2, LN_2, 0.0).unwrap()).unwrap();
        assert!(close(m.t, c(0.5, 0.0), 1e-15));
        assert!(close(m.r, c(-0.5, 0.0), 1e-15));
        assert!(close(m.r_prime, c(-0.5, 0.0), 1e-15));
        assert!(close(m.t_prime, c(0.5, 0.0), 1e-15));
    }

    #[test]
    fn off_resonant_elements_match_high_precision() {
        let m = build_transfer_matrix(&DimensionlessCoupling::new(0.5, 0.5, 1.0).unwrap()).unwrap();
        // mpmath, 30 digits
        assert!(close(
            m.t,
            c(0.754_589_752_755_861_4, 0.192_678_397_202_388_4),
            1e-15
        ));
        assert!(close(
            m.r,
            c(-0.245_410_247_244_138_6, 0.192_678_397_202_388_4),
            1e-15
        ));
    }

    #[test]
    fn identity_diagnostics_are_degenerate() {
        let d = TransferMatrix::identity().diagnostics();
        assert_eq!(d.unitarity_deviation, 0.0);
        assert_eq!(d.fringe_phase_difference, 0.0);
        assert!(d.degenerate);
        assert!(!d.gain_regime);
    }

    #[test]
    fn resonant_diagnostics() {
        let m =
            build_transfer_matrix(&DimensionlessCoupling::new(LN_2, LN_2, 0.0).unwrap()).unwrap();
        let d = m.diagnostics();
        assert!((d.reflection_phase - PI).abs() < 1e-15);
        assert!(d.fringe_phase_difference.abs() < 1e-15);
        assert!(d.unitarity_deviation > 0.0);
        assert!(!d.degenerate);
    }

    #[test]
    fn far_detuned_phase_is_pi() {
        let m = build_transfer_matrix(&DimensionlessCoupling::new(0.2, 0.2, 1e3).unwrap()).unwrap();
        let d = m.diagnostics();
        assert!(
            (d.two_phi() - PI).abs() < 0.01,
            "{}",
            d.fringe_phase_difference
        );
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let m =
            build_transfer_matrix(&DimensionlessCoupling::new(0.7, 1.3, -2.0).unwrap()).unwrap();
        let d = m.diagnostics();
        let mm = m.as_matrix();
        for k in 0..2 {
            let v = nalgebra::Vector2::new(d.eigenvectors[k][0], d.eigenvectors[k][1]);
            let lhs = mm * v;
            let rhs = v * d.eigenvalues[k];
            assert!((lhs - rhs).norm() < 1e-13);
        }
        // the dark state (1, -1) carries eigenvalue 1
        assert!(d.eigenvalues.iter().any(|l| (*l - 1.0).norm() < 1e-13));
    }

    #[test]
    fn singular_values_match_nalgebra_svd() {
        let m = build_transfer_matrix(&DimensionlessCoupling::new(1.1, 2.5, 0.8).unwrap()).unwrap();
        let ours = m.singular_values();
        let svd = m.as_matrix().svd(false, false);
        let mut theirs = [svd.singular_values[0], svd.singular_values[1]];
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((ours[0] - theirs[0]).abs() < 1e-13);
        assert!((ours[1] - theirs[1]).abs() < 1e-13);
        assert!(m.diagnostics().gain_regime);
    }

    #[test]
    fn asymptotic_matrix_entries() {
        let a = asymptotic_transfer_matrix(&DimensionlessCoupling::new(0.1, 0.1, 100.0).unwrap())
            .unwrap();
        assert!(close(a.r, c(0.0, 0.001), 1e-18));
        let a = asymptotic_transfer_matrix(&DimensionlessCoupling::new(0.1, 0.2, 50.0).unwrap())
            .unwrap();
        assert!(close(a.r_prime, c(0.0, 0.004), 1e-18));
        assert!(
            asymptotic_transfer_matrix(&DimensionlessCoupling::new(0.1, 0.2, 0.0).unwrap())
                .is_err()
        );
    }

    #[test]
    fn asymptotic_error_small_relative_to_coupling() {
        let cpl = DimensionlessCoupling::new(0.1, 0.1, 100.0).unwrap();
        let exact = build_transfer_matrix(&cpl).unwrap().as_matrix();
        let asym = asymptotic_transfer_matrix(&cpl).unwrap().as_matrix();
        let dev = (exact - asym).norm();
        let coupling = (exact - Matrix2::identity()).norm();
        assert!(dev < 10.0 * coupling / 100.0);
    }

    #[test]
    fn unitarity_restored_far_from_resonance() {
        let dev = |dr: f64| {
            build_transfer_matrix(&DimensionlessCoupling::new(0.2, 0.2, dr).unwrap())
                .unwrap()
                .unitarity_deviation()
        };
        assert!(dev(1e3) < dev(10.0));
        assert!(dev(10.0) < dev(0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dark_state_is_fixed(zeta in 1e-6f64..5.0, eta in 0.0f64..5.0, dr in -100.0f64..100.0) {
                let m = build_transfer_matrix(&DimensionlessCoupling::new(zeta, eta, dr).unwrap()).unwrap();
                let out = m.apply(ModeAmplitudes::new(c(1.0, 0.0), c(-1.0, 0.0)));
                let scale = 1.0 + m.r_prime.norm();
                prop_assert!((out.s - 1.0).norm() <= 4.0 * f64::EPSILON);
                prop_assert!((out.a + 1.0).norm() <= 4.0 * f64::EPSILON * scale);
            }

            #[test]
            fn resonant_elements_are_real(zeta in 1e-3f64..5.0, eta in 0.0f64..5.0) {
                let m = build_transfer_matrix(&DimensionlessCoupling::new(zeta, eta, 0.0).unwrap()).unwrap();
                for z in [m.t, m.r, m.r_prime, m.t_prime] {
                    prop_assert_eq!(z.im, 0.0);
                }
                prop_assert!(m.t.re > 0.0 && m.t.re < 1.0);
                prop_assert!(m.r.re < 0.0);
                prop_assert!(m.r_prime.re <= 0.0);
            }
        }
    }
}
