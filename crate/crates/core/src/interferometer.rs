//! Temporal Mach–Zehnder protocol built from three splitter operations:
//! magnon preparation, interference with a phase-shifted second probe pulse,
//! and magnon readout.
//!
//! Pulses are reduced to single complex amplitudes (square-pulse areas).

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, MpbsError, Result};
use crate::transfer::{build_transfer_matrix, DimensionlessCoupling, TransferMatrix};

pub use crate::transfer::ModeAmplitudes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub write_matrix: TransferMatrix,
    pub bs_matrix: TransferMatrix,
    pub read_matrix: TransferMatrix,
    pub probe_amplitude: Complex64,
    /// Rescale the second probe pulse so the interfering terms are matched.
    pub balance_mode: bool,
}

/// Stores a magnon from a single probe pulse. `s` is the stored magnon; `a`
/// is the transmitted leakage photon, which the interferometer discards.
pub fn prepare_magnon(cfg: &ProtocolConfig) -> ModeAmplitudes {
    cfg.write_matrix.apply(ModeAmplitudes::new(
        Complex64::new(0.0, 0.0),
        cfg.probe_amplitude,
    ))
}

/// Output intensities `(n_s, n_a)` for magnon `s_in` and probe `probe·e^{iθ}`.
pub fn interfere(bs: &TransferMatrix, s_in: Complex64, probe: Complex64, theta: f64) -> (f64, f64) {
    let out = bs.apply(ModeAmplitudes::new(
        s_in,
        probe * Complex64::from_polar(1.0, theta),
    ));
    (out.n_s(), out.n_a())
}

/// Photon intensity retrieved from magnon `s` by the readout pulse: `|r'·s|²`.
pub fn readout_magnon(read: &TransferMatrix, s: Complex64) -> f64 {
    (read.r_prime * s).norm_sqr()
}

/// Readout efficiency `|r'|²`.
pub fn retrieval_efficiency(read: &TransferMatrix) -> f64 {
    read.r_prime.norm_sqr()
}

/// Smallest η = ζ readout (on a doubling ladder, then bisected) reaching
/// `min_efficiency` retrieval at the given detuning.
pub fn strong_readout(delta_ratio: f64, min_efficiency: f64) -> Result<DimensionlessCoupling> {
    if !(min_efficiency > 0.0 && min_efficiency < 1.0) {
        return Err(invalid("min_efficiency", "must lie in (0, 1)"));
    }
    let eff = |z: f64| -> Result<f64> {
        let m = build_transfer_matrix(&DimensionlessCoupling::new(z, z, delta_ratio)?)?;
        Ok(retrieval_efficiency(&m))
    };
    let mut hi = 1.0;
    while eff(hi)? < min_efficiency {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(invalid(
                "delta_ratio",
                "no readout strength reaches the target",
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eff(mid)? >= min_efficiency {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    DimensionlessCoupling::new(hi, hi, delta_ratio)
}

/// Rescale `probe` so the magnon-port terms `|t s|, |r p|` and photon-port
/// terms `|r' s|, |t' p|` are matched as closely as one magnitude allows
/// (geometric mean of the two matching conditions). Phase is kept.
pub fn balanced_probe(bs: &TransferMatrix, s_in: Complex64, probe: Complex64) -> Complex64 {
    let denom = bs.r.norm() * bs.t_prime.norm();
    let numer = bs.t.norm() * bs.r_prime.norm();
    if s_in.norm() == 0.0 || denom == 0.0 || numer == 0.0 {
        return probe;
    }
    let magnitude = s_in.norm() * (numer / denom).sqrt();
    let phase = if probe.norm() == 0.0 {
        0.0
    } else {
        probe.arg()
    };
    Complex64::from_polar(magnitude, phase)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeSeries {
    pub thetas: Vec<f64>,
    pub n_s: Vec<f64>,
    pub n_a: Vec<f64>,
    pub visibility_s: f64,
    pub visibility_a: f64,
}

pub fn visibility(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

/// `n` equally spaced phases on `[0, 2π)`.
pub fn uniform_theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

impl FringeSeries {
    pub fn from_intensities(thetas: Vec<f64>, n_s: Vec<f64>, n_a: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(invalid("theta_grid", "must be non-empty"));
        }
        if n_s.len() != thetas.len() || n_a.len() != thetas.len() {
            return Err(MpbsError::DimensionMismatch {
                expected: thetas.len(),
                got: n_s.len().min(n_a.len()),
            });
        }
        Ok(FringeSeries {
            visibility_s: visibility(&n_s),
            visibility_a: visibility(&n_a),
            thetas,
            n_s,
            n_a,
        })
    }
}

pub fn fringe_scan(
    bs: &TransferMatrix,
    s_in: Complex64,
    probe: Complex64,
    theta_grid: &[f64],
) -> Result<FringeSeries> {
    if theta_grid.is_empty() {
        return Err(invalid("theta_grid", "must be non-empty"));
    }
    let (n_s, n_a) = theta_grid
        .iter()
        .map(|&th| interfere(bs, s_in, probe, th))
        .unzip();
    FringeSeries::from_intensities(theta_grid.to_vec(), n_s, n_a)
}

/// Random-phase phase-diagram scatter drawn from a caller-supplied generator.
///
/// Each point draws θ uniformly on `[0, 2π)` and scales both intensities by
/// independent factors `max(0, 1 + ε)`, `ε ~ N(0, noise_sigma²)`.
pub fn sample_phase_diagram_with<R: Rng + ?Sized>(
    rng: &mut R,
    bs: &TransferMatrix,
    s_in: Complex64,
    probe: Complex64,
    count: usize,
    noise_sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    sample_intensities(
        rng,
        |th| Ok(interfere(bs, s_in, probe, th)),
        count,
        noise_sigma,
    )
}

/// Same sampling scheme for any `θ -> (n_s, n_a)` model.
pub fn sample_intensities<R, F>(
    rng: &mut R,
    model: F,
    count: usize,
    noise_sigma: f64,
) -> Result<Vec<(f64, f64)>>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> Result<(f64, f64)>,
{
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(invalid("noise_sigma", "must be finite and >= 0"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| invalid("noise_sigma", e.to_string()))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let theta = rng.random_range(0.0..TAU);
        let (n_s, n_a) = model(theta)?;
        if noise_sigma == 0.0 {
            out.push((n_s, n_a));
        } else {
            let fs = (1.0 + noise.sample(rng)).max(0.0);
            let fa = (1.0 + noise.sample(rng)).max(0.0);
            out.push((n_s * fs, n_a * fa));
        }
    }
    Ok(out)
}

/// Seeded variant of [`sample_phase_diagram_with`]; bit-reproducible per seed.
pub fn sample_phase_diagram(
    bs: &TransferMatrix,
    s_in: Complex64,
    probe: Complex64,
    count: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_phase_diagram_with(&mut rng, bs, s_in, probe, count, noise_sigma)
}

/// Full protocol run over a phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub prepared: ModeAmplitudes,
    /// Second probe amplitude actually used (after balancing).
    pub probe: Complex64,
    pub fringe: FringeSeries,
    /// Photon intensity recovered from each output magnon by the readout pulse.
    pub retrieved: Vec<f64>,
}

impl ProtocolConfig {
    /// Write and interference stages share `bs`; readout uses `read`.
    pub fn new(
        bs: TransferMatrix,
        read: TransferMatrix,
        probe_amplitude: Complex64,
        balance_mode: bool,
    ) -> Self {
        ProtocolConfig {
            write_matrix: bs,
            bs_matrix: bs,
            read_matrix: read,
            probe_amplitude,
            balance_mode,
        }
    }

    pub fn interference_probe(&self, stored: Complex64) -> Complex64 {
        if self.balance_mode {
            balanced_probe(&self.bs_matrix, stored, self.probe_amplitude)
        } else {
            self.probe_amplitude
        }
    }

    pub fn run(&self, theta_grid: &[f64]) -> Result<ProtocolRun> {
        let prepared = prepare_magnon(self);
        let probe = self.interference_probe(prepared.s);
        let fringe = fringe_scan(&self.bs_matrix, prepared.s, probe, theta_grid)?;
        let retrieved = theta_grid
            .iter()
            .map(|&th| {
                let out = self.bs_matrix.apply(ModeAmplitudes::new(
                    prepared.s,
                    probe * Complex64::from_polar(1.0, th),
                ));
                readout_magnon(&self.read_matrix, out.s)
            })
            .collect();
        Ok(ProtocolRun {
            prepared,
            probe,
            fringe,
            retrieved,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pearson_correlation;
    use crate::transfer::build_transfer_matrix;
    use std::f64::consts::{LN_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matrix(z: f64, e: f64, dr: f64) -> TransferMatrix {
        build_transfer_matrix(&DimensionlessCoupling::new(z, e, dr).unwrap()).unwrap()
    }

    fn cfg(write: TransferMatrix) -> ProtocolConfig {
        ProtocolConfig {
            write_matrix: write,
            bs_matrix: write,
            read_matrix: write,
            probe_amplitude: c(1.0, 0.0),
            balance_mode: false,
        }
    }

    #[test]
    fn identity_write_stores_nothing() {
        let p = prepare_magnon(&cfg(TransferMatrix::identity()));
        assert_eq!(p.s, c(0.0, 0.0));
        assert_eq!(p.a, c(1.0, 0.0));
    }

    #[test]
    fn balanced_write_stores_quarter() {
        let p = prepare_magnon(&cfg(matrix(LN_2, LN_2, 0.0)));
        assert!((p.s - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((p.n_s() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn detuned_write_matches_closed_form() {
        let p = prepare_magnon(&cfg(matrix(1.0, 1.0, 2.0)));
        // exp(-1/(1+2i)) - 1, mpmath
        assert!((p.s - c(-0.245_899_038_749_263_36, 0.318_828_772_660_740_7)).norm() < 1e-15);
    }

    #[test]
    fn balanced_resonant_dark_and_bright_inputs() {
        let bs = matrix(LN_2, LN_2, 0.0);
        let (ns, na) = interfere(&bs, c(1.0, 0.0), c(1.0, 0.0), PI);
        assert!((ns - 1.0).abs() < 1e-15 && (na - 1.0).abs() < 1e-15);
        let (ns, na) = interfere(&bs, c(1.0, 0.0), c(1.0, 0.0), 0.0);
        assert!(ns < 1e-30 && na < 1e-30);
    }

    #[test]
    fn far_detuned_extremes_are_pi_apart() {
        let bs = matrix(0.2, 0.2, 1e3);
        let n = 20_000;
        let grid = uniform_theta_grid(n);
        let f = fringe_scan(&bs, c(1.0, 0.0), c(1.0, 0.0), &grid).unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let ts = grid[argmax(&f.n_s)];
        let ta = grid[argmax(&f.n_a)];
        assert!((crate::wrap_phase(ts - ta).abs() - PI).abs() < 0.02);
    }

    #[test]
    fn single_port_input_has_flat_fringes() {
        let bs = matrix(0.7, 0.4, 3.0);
        let f = fringe_scan(&bs, c(0.0, 0.0), c(1.0, 0.0), &uniform_theta_grid(16)).unwrap();
        assert!(f.visibility_s < 1e-12 && f.visibility_a < 1e-12);
        assert!(fringe_scan(&bs, c(1.0, 0.0), c(1.0, 0.0), &[]).is_err());
    }

    #[test]
    fn balanced_resonant_fringes_are_identical() {
        let bs = matrix(LN_2, LN_2, 0.0);
        let grid = uniform_theta_grid(32);
        let f = fringe_scan(&bs, c(1.0, 0.0), c(1.0, 0.0), &grid).unwrap();
        for (k, &th) in grid.iter().enumerate() {
            let expected = 0.5 * (1.0 - th.cos());
            assert!((f.n_s[k] - expected).abs() < 1e-15);
            assert!((f.n_a[k] - expected).abs() < 1e-15);
        }
        assert!((pearson_correlation(&f.n_s, &f.n_a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_detuned_matched_fringes_anticorrelate() {
        let bs = matrix(0.2, 0.2, 1e3);
        let s = c(1.0, 0.0);
        let p = balanced_probe(&bs, s, c(1.0, 0.0));
        let f = fringe_scan(&bs, s, p, &uniform_theta_grid(64)).unwrap();
        assert!(pearson_correlation(&f.n_s, &f.n_a).unwrap() < -0.99);
    }

    #[test]
    fn noiseless_single_port_scatter_is_one_point() {
        let bs = matrix(0.7, 0.4, 3.0);
        let pts = sample_phase_diagram(&bs, c(0.0, 0.0), c(1.0, 0.0), 50, 3, 0.0).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-14 * y.abs();
        assert!(pts
            .iter()
            .all(|p| close(p.0, pts[0].0) && close(p.1, pts[0].1)));
        assert!(sample_phase_diagram(&bs, c(0.0, 0.0), c(1.0, 0.0), 0, 3, 0.0).is_err());
        assert!(sample_phase_diagram(&bs, c(0.0, 0.0), c(1.0, 0.0), 5, 3, -0.1).is_err());
    }

    #[test]
    fn balanced_resonant_scatter_on_diagonal() {
        let bs = matrix(LN_2, LN_2, 0.0);
        let pts = sample_phase_diagram(&bs, c(1.0, 0.0), c(1.0, 0.0), 1000, 11, 0.0).unwrap();
        assert!(pts.iter().all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn detuned_scatter_lies_on_ellipse() {
        let bs = matrix(0.3, 0.3, 3.0);
        let pts = sample_phase_diagram(&bs, c(1.0, 0.0), c(1.0, 0.0), 1000, 5, 0.0).unwrap();
        let fit = crate::analysis::fit_ellipse(&pts).unwrap();
        assert!(fit.rms_residual < 1e-8, "{}", fit.rms_residual);
    }

    #[test]
    fn noise_never_drives_intensity_negative() {
        let bs = matrix(0.3, 0.3, 3.0);
        let pts = sample_phase_diagram(&bs, c(1.0, 0.0), c(1.0, 0.0), 2000, 5, 2.0).unwrap();
        assert!(pts.iter().all(|(x, y)| *x >= 0.0 && *y >= 0.0));
    }

    #[test]
    fn same_seed_same_samples() {
        let bs = matrix(0.3, 0.9, -2.0);
        let a = sample_phase_diagram(&bs, c(0.5, 0.1), c(1.0, 0.0), 300, 42, 0.05).unwrap();
        let b = sample_phase_diagram(&bs, c(0.5, 0.1), c(1.0, 0.0), 300, 42, 0.05).unwrap();
        let other = sample_phase_diagram(&bs, c(0.5, 0.1), c(1.0, 0.0), 300, 43, 0.05).unwrap();
        assert!(a
            .iter()
            .zip(&b)
            .all(|(p, q)| p.0.to_bits() == q.0.to_bits() && p.1.to_bits() == q.1.to_bits()));
        assert_ne!(a, other);
    }

    #[test]
    fn readout_values() {
        assert_eq!(readout_magnon(&matrix(LN_2, LN_2, 0.0), c(0.0, 0.0)), 0.0);
        assert!((readout_magnon(&matrix(LN_2, LN_2, 0.0), c(1.0, 0.0)) - 0.25).abs() < 1e-15);
        // |e^{-5} - 1|², mpmath: 0.986569505931591550658
        assert!(
            (readout_magnon(&matrix(5.0, 5.0, 0.0), c(1.0, 0.0)) - 0.986_569_505_931_591_6).abs()
                < 1e-15
        );
    }

    #[test]
    fn strong_readout_reaches_target() {
        for dr in [0.0, 3.0, 10.0, -20.0] {
            let cpl = strong_readout(dr, 0.98).unwrap();
            let m = build_transfer_matrix(&cpl).unwrap();
            assert!(retrieval_efficiency(&m) >= 0.98);
        }
    }

    #[test]
    fn protocol_run_shapes() {
        let bs = matrix(2.6, 2.0, 10.0);
        let read = build_transfer_matrix(&strong_readout(10.0, 0.98).unwrap()).unwrap();
        let cfg = ProtocolConfig::new(bs, read, c(1.0, 0.0), true);
        let run = cfg.run(&uniform_theta_grid(8)).unwrap();
        assert_eq!(run.fringe.n_s.len(), 8);
        assert_eq!(run.retrieved.len(), 8);
        for (ret, ns) in run.retrieved.iter().zip(&run.fringe.n_s) {
            assert!((ret - retrieval_efficiency(&read) * ns).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_bounded_by_spectral_norm(z in 0.01f64..5.0, e in 0.0f64..5.0, dr in -50.0f64..50.0,
                                               sr in -2.0f64..2.0, si in -2.0f64..2.0, pa in 0.0f64..2.0,
                                               th in 0.0f64..TAU) {
                let bs = matrix(z, e, dr);
                let s = c(sr, si);
                let p = c(pa, 0.0);
                let (ns, na) = interfere(&bs, s, p, th);
                let bound = (s.norm_sqr() + p.norm_sqr()) * bs.diagnostics().spectral_norm.powi(2);
                prop_assert!(ns + na <= bound * (1.0 + 1e-12));
            }

            #[test]
            fn dark_input_conserves_intensity(z in 0.01f64..5.0, e in 0.0f64..5.0, dr in -50.0f64..50.0,
                                              mag in 0.1f64..3.0, ph in 0.0f64..TAU) {
                let bs = matrix(z, e, dr);
                let s = Complex64::from_polar(mag, ph);
                // probe·e^{iθ} = -s with θ = π
                let (ns, na) = interfere(&bs, s, s, std::f64::consts::PI);
                let total = 2.0 * mag * mag;
                prop_assert!((ns + na - total).abs() <= 8.0 * f64::EPSILON * total * (1.0 + bs.r_prime.norm()));
            }
        }
    }
}
