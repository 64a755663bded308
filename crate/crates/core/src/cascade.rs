//! Multimode stand-in: the ensemble as `M` single-magnon-mode splitters in
//! series. The photon threads through the slices in order; slice `k` mixes
//! it with its own magnon `S_k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::analysis::analyze_fringes;
use crate::error::{invalid, MpbsError, Result};
use crate::interferometer::{uniform_theta_grid, FringeSeries};
use crate::transfer::{
    build_transfer_matrix, derive_dimensionless, DimensionlessCoupling, MpbsParams, TransferMatrix,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub slices: usize,
    /// `(ζ/M, η/M, Δ/κ₁₃)`.
    pub per_slice: DimensionlessCoupling,
    pub slice_matrix: TransferMatrix,
    /// `(M+1)×(M+1)` on `(S₁, …, S_M, a)`.
    pub total: DMatrix<Complex64>,
}

pub fn build_cascade(c: &DimensionlessCoupling, slices: usize) -> Result<CascadeModel> {
    if slices == 0 {
        return Err(invalid("slices", "must be >= 1"));
    }
    let m = slices as f64;
    let per_slice = DimensionlessCoupling::new(c.zeta / m, c.eta / m, c.delta_ratio)?;
    let slice_matrix = build_transfer_matrix(&per_slice)?;
    let dim = slices + 1;
    let photon = slices;
    let TransferMatrix {
        t,
        r,
        r_prime,
        t_prime,
    } = slice_matrix;
    // Left-multiplying by slice k's embedded matrix only touches rows k and a.
    let mut total = DMatrix::<Complex64>::identity(dim, dim);
    for k in 0..slices {
        for col in 0..dim {
            let s = total[(k, col)];
            let a = total[(photon, col)];
            total[(k, col)] = t * s + r * a;
            total[(photon, col)] = r_prime * s + t_prime * a;
        }
    }
    Ok(CascadeModel {
        slices,
        per_slice,
        slice_matrix,
        total,
    })
}

/// Output of applying the cascade to `(magnons, photon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub magnons: Vec<Complex64>,
    pub photon: Complex64,
}

impl CascadeOutput {
    /// Incoherent sum `Σ|S_k|²`.
    pub fn n_s_total(&self) -> f64 {
        self.magnons.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn n_a(&self) -> f64 {
        self.photon.norm_sqr()
    }

    pub fn magnon_norm(&self) -> f64 {
        self.n_s_total().sqrt()
    }
}

impl CascadeModel {
    pub fn apply(&self, magnons: &[Complex64], photon: Complex64) -> Result<CascadeOutput> {
        if magnons.len() != self.slices {
            return Err(MpbsError::DimensionMismatch {
                expected: self.slices,
                got: magnons.len(),
            });
        }
        let mut input = DVector::<Complex64>::zeros(self.slices + 1);
        input.rows_mut(0, self.slices).copy_from_slice(magnons);
        input[self.slices] = photon;
        let out = &self.total * input;
        Ok(CascadeOutput {
            magnons: out.rows(0, self.slices).iter().copied().collect(),
            photon: out[self.slices],
        })
    }

    /// Store a probe pulse in an empty ensemble: applies the cascade to `(0, …, 0, probe)`.
    pub fn prepare(&self, probe: Complex64) -> CascadeOutput {
        let zeros = vec![Complex64::new(0.0, 0.0); self.slices];
        self.apply(&zeros, probe)
            .expect("length matches by construction")
    }

    /// `‖T†T - I‖_F` of the full cascade.
    pub fn unitarity_deviation(&self) -> f64 {
        let dim = self.slices + 1;
        (self.total.adjoint() * &self.total - DMatrix::identity(dim, dim)).norm()
    }

    pub fn photon_transmission(&self) -> Complex64 {
        self.total[(self.slices, self.slices)]
    }
}

/// `(n_s_total, n_a)` for stored magnons and probe `probe·e^{iθ}`.
pub fn cascade_interfere(
    model: &CascadeModel,
    magnon_state: &[Complex64],
    probe: Complex64,
    theta: f64,
) -> Result<(f64, f64)> {
    let out = model.apply(magnon_state, probe * Complex64::from_polar(1.0, theta))?;
    Ok((out.n_s_total(), out.n_a()))
}

pub fn cascade_fringe_scan(
    model: &CascadeModel,
    magnon_state: &[Complex64],
    probe: Complex64,
    theta_grid: &[f64],
) -> Result<FringeSeries> {
    if theta_grid.is_empty() {
        return Err(invalid("theta_grid", "must be non-empty"));
    }
    let mut n_s = Vec::with_capacity(theta_grid.len());
    let mut n_a = Vec::with_capacity(theta_grid.len());
    for &th in theta_grid {
        let (s, a) = cascade_interfere(model, magnon_state, probe, th)?;
        n_s.push(s);
        n_a.push(a);
    }
    FringeSeries::from_intensities(theta_grid.to_vec(), n_s, n_a)
}

/// Stored magnons, interfering probe and resulting fringes of one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFringe {
    pub prepared: CascadeOutput,
    pub probe: Complex64,
    pub fringe: FringeSeries,
    /// `None` when a fringe is unresolved (e.g. no atoms).
    pub delta_psi: Option<f64>,
    pub pearson: Option<f64>,
}

/// Store a unit probe, then interfere with a probe whose amplitude equals the
/// stored magnon norm. The phase difference does not depend on either
/// amplitude, only the visibilities do.
pub fn cascade_protocol(model: &CascadeModel, theta_samples: usize) -> Result<CascadeFringe> {
    cascade_protocol_with(model, 1.0, true, theta_samples)
}

/// As [`cascade_protocol`] with an explicit write amplitude. Without
/// `balance_mode` the interfering probe reuses `probe_amplitude`.
pub fn cascade_protocol_with(
    model: &CascadeModel,
    probe_amplitude: f64,
    balance_mode: bool,
    theta_samples: usize,
) -> Result<CascadeFringe> {
    let prepared = model.prepare(Complex64::new(probe_amplitude, 0.0));
    let probe = if balance_mode {
        Complex64::new(prepared.magnon_norm(), 0.0)
    } else {
        Complex64::new(probe_amplitude, 0.0)
    };
    let grid = uniform_theta_grid(theta_samples);
    let fringe = cascade_fringe_scan(model, &prepared.magnons, probe, &grid)?;
    let fa = analyze_fringes(&fringe.thetas, &fringe.n_s, &fringe.n_a)?;
    Ok(CascadeFringe {
        prepared,
        probe,
        fringe,
        delta_psi: fa.delta_psi,
        pearson: fa.pearson,
    })
}

/// Slice count used at a given OD: `max(1, round(slices_per_unit_od·OD))`.
pub fn slices_for_od(od: f64, slices_per_unit_od: f64) -> usize {
    ((slices_per_unit_od * od).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPoint {
    pub od: f64,
    pub slices: usize,
    /// `None` means degenerate (unresolved fringe).
    pub delta_psi: Option<f64>,
    pub visibility_s: f64,
    pub visibility_a: f64,
    pub pearson: Option<f64>,
    pub unitarity_deviation: f64,
    /// Single-mode Δψ at the same totals, for comparison.
    pub single_mode_delta_psi: Option<f64>,
}

impl OdPoint {
    pub fn degenerate(&self) -> bool {
        self.delta_psi.is_none()
    }

    /// `|Δψ|`, NaN when degenerate.
    pub fn two_phi(&self) -> f64 {
        self.delta_psi.map(f64::abs).unwrap_or(f64::NAN)
    }
}

/// Samples per fringe in [`phase_vs_od`].
pub const OD_SWEEP_THETA_SAMPLES: usize = 64;

pub fn cascade_point(base: &MpbsParams, od: f64, slices_per_unit_od: f64) -> Result<OdPoint> {
    let params = base.with_od(od);
    let c = derive_dimensionless(&params)?;
    let slices = slices_for_od(od, slices_per_unit_od);
    let model = build_cascade(&c, slices)?;
    let run = cascade_protocol(&model, OD_SWEEP_THETA_SAMPLES)?;
    let single = build_transfer_matrix(&c)?.fringe_phase_difference();
    Ok(OdPoint {
        od,
        slices,
        delta_psi: run.delta_psi,
        visibility_s: run.fringe.visibility_s,
        visibility_a: run.fringe.visibility_a,
        pearson: run.pearson,
        unitarity_deviation: model.unitarity_deviation(),
        single_mode_delta_psi: single,
    })
}

pub fn phase_vs_od(
    base: &MpbsParams,
    od_grid: &[f64],
    slices_per_unit_od: f64,
) -> Result<Vec<OdPoint>> {
    if !(slices_per_unit_od > 0.0) || !slices_per_unit_od.is_finite() {
        return Err(invalid("slices_per_unit_od", "must be finite and > 0"));
    }
    od_grid
        .iter()
        .map(|&od| cascade_point(base, od, slices_per_unit_od))
        .collect()
}
