//! Simulation and analysis of a reconfigurable non-Hermitian magnon-photon
//! beam splitter (MPBS) in a three-level Λ atomic ensemble.
//!
//! The crate is organised bottom-up:
//!
//! - [`transfer`]: the closed-form 2×2 transfer matrix acting on
//!   `(magnon S, photon a)` amplitudes, plus phase/loss/eigenmode diagnostics.
//! - [`hamiltonian`]: the two-mode effective Hamiltonian after adiabatic
//!   elimination of the excited state and its exact propagator.
//! - [`interferometer`]: the temporal Mach–Zehnder protocol (magnon
//!   preparation, interference, readout) and random-phase sampling.
//! - [`cascade`]: a multimode stand-in where the ensemble is a chain of
//!   single-magnon-mode splitters.
//! - [`analysis`]: sinusoid and ellipse fitting, phase difference extraction
//!   and correlation statistics.
//! - [`cli`]: configuration, command dispatch and CSV/SVG output.
//!
//! Basis ordering matters: [`transfer::TransferMatrix`] uses `(S, a)`, while
//! [`hamiltonian::EffectiveHamiltonian`] uses `(a, S)`.
//! [`hamiltonian::to_transfer_basis`] converts between the two.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod hamiltonian;
pub mod interferometer;
pub mod transfer;

pub use error::{MpbsError, Result};
pub use num_complex::Complex64;
pub use transfer::{
    build_transfer_matrix, derive_dimensionless, DimensionlessCoupling, ModeAmplitudes, MpbsParams,
    TransferMatrix,
};

/// Wrap an angle to `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}
