//! Fringe and phase-diagram fitting.
//!
//! Sinusoid fits use linear least squares on `{1, cos θ, sin θ}`. Ellipse fits
//! are algebraic and non-iterative, run after centering and per-axis variance
//! normalization, and report conics scaled to `4AC - B² = 1`. The reported
//! residual is the algebraic distance in normalized coordinates.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix5, Vector3, Vector5};

use crate::error::{MpbsError, Result};
use crate::wrap_phase;

/// `model(θ) = offset + amplitude·cos(θ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amp_cos: f64,
    pub amp_sin: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub rms_residual: f64,
}

impl SinusoidFit {
    pub fn eval(&self, theta: f64) -> f64 {
        self.offset + self.amp_cos * theta.cos() + self.amp_sin * theta.sin()
    }
}

pub fn fit_sinusoid(thetas: &[f64], values: &[f64]) -> Result<SinusoidFit> {
    if thetas.len() != values.len() {
        return Err(MpbsError::DimensionMismatch {
            expected: thetas.len(),
            got: values.len(),
        });
    }
    if thetas.len() < 3 {
        return Err(MpbsError::InsufficientPoints {
            needed: 3,
            got: thetas.len(),
        });
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&th, &y) in thetas.iter().zip(values) {
        let row = Vector3::new(1.0, th.cos(), th.sin());
        normal += row * row.transpose();
        rhs += row * y;
    }
    let eig = normal.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-10 * max) {
        return Err(MpbsError::DegenerateSampling(
            "phases span fewer than three distinct points on the circle".into(),
        ));
    }
    let coef = normal
        .cholesky()
        .ok_or_else(|| {
            MpbsError::DegenerateSampling("normal equations not positive definite".into())
        })?
        .solve(&rhs);
    let (offset, amp_cos, amp_sin) = (coef[0], coef[1], coef[2]);
    let ss: f64 = thetas
        .iter()
        .zip(values)
        .map(|(&th, &y)| {
            let e = y - (offset + amp_cos * th.cos() + amp_sin * th.sin());
            e * e
        })
        .sum();
    Ok(SinusoidFit {
        offset,
        amp_cos,
        amp_sin,
        amplitude: amp_cos.hypot(amp_sin),
        phase: (-amp_sin).atan2(amp_cos),
        rms_residual: (ss / thetas.len() as f64).sqrt(),
    })
}

/// `Δψ = wrap(phase_s - phase_a)` in `(-π, π]`.
///
/// Both fringes must be resolved: amplitude above ten times the residual
/// and above `1e-12` of the fringe offset.
pub fn fringe_phase_difference(fit_s: &SinusoidFit, fit_a: &SinusoidFit) -> Result<f64> {
    for (name, f) in [("magnon", fit_s), ("photon", fit_a)] {
        let floor = 1e-12 * f.offset.abs();
        if !(f.amplitude > 10.0 * f.rms_residual && f.amplitude > floor) {
            return Err(MpbsError::LowVisibility(format!(
                "{name} fringe amplitude {:.3e} vs residual {:.3e}",
                f.amplitude, f.rms_residual
            )));
        }
    }
    Ok(wrap_phase(fit_s.phase - fit_a.phase))
}

/// Both fringes of a scan, their phase difference and their correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeAnalysis {
    pub fit_s: SinusoidFit,
    pub fit_a: SinusoidFit,
    /// `None` when a fringe is unresolved.
    pub delta_psi: Option<f64>,
    /// `None` when a fringe is flat.
    pub pearson: Option<f64>,
}

impl FringeAnalysis {
    /// `|Δψ|` in `[0, π]`, NaN when unresolved.
    pub fn two_phi(&self) -> f64 {
        self.delta_psi.map(f64::abs).unwrap_or(f64::NAN)
    }
}

pub fn analyze_fringes(thetas: &[f64], n_s: &[f64], n_a: &[f64]) -> Result<FringeAnalysis> {
    let fit_s = fit_sinusoid(thetas, n_s)?;
    let fit_a = fit_sinusoid(thetas, n_a)?;
    Ok(FringeAnalysis {
        delta_psi: fringe_phase_difference(&fit_s, &fit_a).ok(),
        pearson: pearson_correlation(n_s, n_a).ok(),
        fit_s,
        fit_a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    None,
    /// Points on a rising line: fully correlated, δ = 0.
    LinePositive,
    /// Points on a falling line: anti-correlated, δ = π.
    LineNegative,
}

impl Degeneracy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Degeneracy::None => "none",
            Degeneracy::LinePositive => "line_positive",
            Degeneracy::LineNegative => "line_negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFit {
    /// `(A, B, C, D, E, F)` of `Ax² + Bxy + Cy² + Dx + Ey + F = 0` in the
    /// original coordinates, scaled so that `4AC - B² = 1`. Zero for lines.
    pub conic: [f64; 6],
    pub center: (f64, f64),
    /// Phase difference in `[0, π]`; the sign is not observable.
    pub delta: f64,
    pub degeneracy: Degeneracy,
    pub method: EllipseMethod,
    /// RMS algebraic distance in normalized coordinates.
    pub rms_residual: f64,
    /// The scatter was centered and per-axis variance normalized first.
    pub normalized: bool,
}

/// Degenerate-line threshold on the minor/major principal variance ratio.
const LINE_VARIANCE_RATIO: f64 = 1e-9;

/// Conic estimator that produced an [`EllipseFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipseMethod {
    /// Gradient-weighted algebraic fit (Taubin).
    GradientWeighted,
    /// Direct least squares under `4AC - B² = 1`; always yields an ellipse.
    Direct,
    /// Degenerate line, no conic solved.
    Line,
}

impl EllipseMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EllipseMethod::GradientWeighted => "gradient_weighted",
            EllipseMethod::Direct => "direct",
            EllipseMethod::Line => "line",
        }
    }
}

/// Centered, per-axis normalized scatter, or the line classification.
struct Normalized {
    points: Vec<(f64, f64)>,
    mean: (f64, f64),
    scale: (f64, f64),
}

fn normalize(points: &[(f64, f64)]) -> Result<std::result::Result<Normalized, EllipseFit>> {
    if points.len() < 6 {
        return Err(MpbsError::InsufficientPoints {
            needed: 6,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let cov = Matrix2::new(sxx, sxy, sxy, syy).symmetric_eigen();
    let major = cov.eigenvalues.max();
    let minor = cov.eigenvalues.min().max(0.0);
    if !(major > 0.0) {
        return Err(MpbsError::CoincidentPoints);
    }
    if minor < LINE_VARIANCE_RATIO * major {
        let (degeneracy, delta) = if sxy >= 0.0 {
            (Degeneracy::LinePositive, 0.0)
        } else {
            (Degeneracy::LineNegative, PI)
        };
        return Ok(Err(EllipseFit {
            conic: [0.0; 6],
            center: (mx, my),
            delta,
            degeneracy,
            method: EllipseMethod::Line,
            rms_residual: 0.0,
            normalized: true,
        }));
    }
    // A vanishing axis variance would have been caught as a line above.
    let (sx, sy) = (sxx.sqrt(), syy.sqrt());
    Ok(Ok(Normalized {
        points: points
            .iter()
            .map(|&(x, y)| ((x - mx) / sx, (y - my) / sy))
            .collect(),
        mean: (mx, my),
        scale: (sx, sy),
    }))
}

/// Fit an ellipse to unordered `(x, y)` scatter and extract δ.
///
/// Uses the gradient-weighted algebraic estimator, which stays nearly
/// unbiased under intensity noise. If that conic is not an ellipse the
/// direct constrained fit is used instead.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<EllipseFit> {
    let norm = match normalize(points)? {
        Ok(n) => n,
        Err(line) => return Ok(line),
    };
    match taubin_conic(&norm.points) {
        Some(c) if is_ellipse(&c) => finish(&norm, c, EllipseMethod::GradientWeighted),
        _ => finish(&norm, direct_conic(&norm.points)?, EllipseMethod::Direct),
    }
}

/// Direct least squares: minimize `Σ conic(xᵢ, yᵢ)²` under `4AC - B² = 1`.
pub fn fit_ellipse_direct(points: &[(f64, f64)]) -> Result<EllipseFit> {
    let norm = match normalize(points)? {
        Ok(n) => n,
        Err(line) => return Ok(line),
    };
    finish(&norm, direct_conic(&norm.points)?, EllipseMethod::Direct)
}

fn is_ellipse(c: &[f64; 6]) -> bool {
    let scale = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
    4.0 * c[0] * c[2] - c[1] * c[1] > 1e-12 * scale
}

fn finish(norm: &Normalized, conic: [f64; 6], method: EllipseMethod) -> Result<EllipseFit> {
    let k = (4.0 * conic[0] * conic[2] - conic[1] * conic[1]).sqrt();
    let sign = if conic[0] < 0.0 { -1.0 } else { 1.0 };
    let norm_conic = conic.map(|v| sign * v / k);
    let n = norm.points.len() as f64;
    let rms_residual = (norm
        .points
        .iter()
        .map(|&(x, y)| conic_value(&norm_conic, x, y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let (delta, _) = delta_from_conic(&norm_conic)?;
    let (mx, my) = norm.mean;
    let conic = denormalize(&norm_conic, mx, my, norm.scale.0, norm.scale.1);
    let center = conic_center(&conic).unwrap_or((mx, my));
    Ok(EllipseFit {
        conic,
        center,
        delta,
        degeneracy: Degeneracy::None,
        method,
        rms_residual,
        normalized: true,
    })
}

/// Minimize `Σ conic² / Σ |∇conic|²`. The constant term is eliminated first,
/// leaving a 5×5 symmetric-definite generalized eigenproblem.
fn taubin_conic(points: &[(f64, f64)]) -> Option<[f64; 6]> {
    let n = points.len() as f64;
    let feat = |x: f64, y: f64| Vector5::new(x * x, x * y, y * y, x, y);
    let mean = points
        .iter()
        .map(|&(x, y)| feat(x, y))
        .sum::<Vector5<f64>>()
        / n;
    let mut scatter = Matrix5::<f64>::zeros();
    let mut grad = Matrix5::<f64>::zeros();
    for &(x, y) in points {
        let d = feat(x, y) - mean;
        scatter += d * d.transpose();
        let gx = Vector5::new(2.0 * x, y, 0.0, 1.0, 0.0);
        let gy = Vector5::new(0.0, x, 2.0 * y, 0.0, 1.0);
        grad += gx * gx.transpose() + gy * gy.transpose();
    }
    let chol = grad.cholesky()?;
    let l_inv = chol.l().try_inverse()?;
    let reduced = l_inv * scatter * l_inv.transpose();
    let eig = reduced.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let theta = l_inv.transpose() * eig.eigenvectors.column(imin);
    let f = -theta.dot(&mean);
    Some([theta[0], theta[1], theta[2], theta[3], theta[4], f])
}

fn direct_conic(points: &[(f64, f64)]) -> Result<[f64; 6]> {
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for &(x, y) in points {
        let quad = Vector3::new(x * x, x * y, y * y);
        let lin = Vector3::new(x, y, 1.0);
        s1 += quad * quad.transpose();
        s2 += quad * lin.transpose();
        s3 += lin * lin.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| MpbsError::DegenerateSampling("linear-term scatter is singular".into()))?;
    // linear coefficients as a function of the quadratic ones
    let elim = -s3_inv * s2.transpose();
    let reduced = s1 + s2 * elim;
    // C₁⁻¹ for C₁ = [[0, 0, 2], [0, -1, 0], [2, 0, 0]]
    let c1_inv = Matrix3::new(0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0);
    let quad = ellipse_eigenvector(&(c1_inv * reduced)).ok_or(MpbsError::NotAnEllipse(f64::NAN))?;
    let lin = elim * quad;
    Ok([quad[0], quad[1], quad[2], lin[0], lin[1], lin[2]])
}

fn conic_value(c: &[f64; 6], x: f64, y: f64) -> f64 {
    c[0] * x * x + c[1] * x * y + c[2] * y * y + c[3] * x + c[4] * y + c[5]
}

/// Eigenvector of the reduced 3×3 system with `4ac - b² > 0`, scaled to
/// `4ac - b² = 1` and `a > 0`.
fn ellipse_eigenvector(system: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let eigenvalues = system.complex_eigenvalues();
    let scale = system.norm().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lam in eigenvalues.iter() {
        if lam.im.abs() > 1e-8 * scale {
            continue;
        }
        let shifted = system - Matrix3::identity() * lam.re;
        let Some(v) = null_vector(&shifted) else {
            continue;
        };
        let constraint = 4.0 * v[0] * v[2] - v[1] * v[1];
        if constraint <= 0.0 {
            continue;
        }
        let mut v = v / constraint.sqrt();
        if v[0] < 0.0 {
            v = -v;
        }
        // prefer the smallest non-negative eigenvalue (least algebraic error)
        let key = lam.re.abs();
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Null vector of a rank-2 3×3 matrix from the largest cross product of its rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [
        m.row(0).transpose(),
        m.row(1).transpose(),
        m.row(2).transpose(),
    ];
    let candidates = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())?;
    let n = best.norm();
    if n > 0.0 && n.is_finite() {
        Some(best / n)
    } else {
        None
    }
}

/// Map a conic fitted in `((x - mx)/sx, (y - my)/sy)` back to `(x, y)` and
/// rescale to `4AC - B² = 1`.
fn denormalize(c: &[f64; 6], mx: f64, my: f64, sx: f64, sy: f64) -> [f64; 6] {
    let a = c[0] / (sx * sx);
    let b = c[1] / (sx * sy);
    let cc = c[2] / (sy * sy);
    let d = c[3] / sx;
    let e = c[4] / sy;
    let f = c[5];
    let out = [
        a,
        b,
        cc,
        -2.0 * a * mx - b * my + d,
        -2.0 * cc * my - b * mx + e,
        a * mx * mx + b * mx * my + cc * my * my - d * mx - e * my + f,
    ];
    let k = (4.0 * out[0] * out[2] - out[1] * out[1]).sqrt();
    out.map(|v| v / k)
}

fn conic_center(c: &[f64; 6]) -> Option<(f64, f64)> {
    let m = Matrix2::new(2.0 * c[0], c[1], c[1], 2.0 * c[2]);
    let rhs = nalgebra::Vector2::new(-c[3], -c[4]);
    m.try_inverse().map(|inv| {
        let v = inv * rhs;
        (v[0], v[1])
    })
}

/// Flags accompanying [`delta_from_conic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeltaFlags {
    /// Always set: traversal direction is unobservable, so δ and -δ coincide.
    pub sign_ambiguous: bool,
    /// `|cos δ|` reached 1: the ellipse is collapsing onto a line.
    pub near_degenerate: bool,
}

/// Lissajous phase from the quadratic part: `cos δ = -B / (2√(AC))`.
pub fn delta_from_conic(conic: &[f64; 6]) -> Result<(f64, DeltaFlags)> {
    let (a, b, c) = (conic[0], conic[1], conic[2]);
    let disc = 4.0 * a * c - b * b;
    let scale = (a * a + b * b + c * c).sqrt();
    if !(a > 0.0 && c > 0.0) || disc < -1e-12 * scale * scale {
        return Err(MpbsError::NotAnEllipse(disc));
    }
    let cos_delta = -b / (2.0 * (a * c).sqrt());
    let near_degenerate = cos_delta.abs() >= 1.0 - 1e-12;
    Ok((
        cos_delta.clamp(-1.0, 1.0).acos(),
        DeltaFlags {
            sign_ambiguous: true,
            near_degenerate,
        },
    ))
}

pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MpbsError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MpbsError::InsufficientPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    // relative floor so round-off on a flat series counts as zero variance
    let flat = |ss: f64, m: f64| ss <= (1e-24 * m * m) * n;
    if flat(sxx, mx) || sxx == 0.0 {
        return Err(MpbsError::ZeroVariance("x"));
    }
    if flat(syy, my) || syy == 0.0 {
        return Err(MpbsError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
