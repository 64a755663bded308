//! Subcommand bodies. Each renders its tables and plots into an
//! [`OutputBatch`] and returns a JSON summary; nothing touches the
//! filesystem until every computation has succeeded.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{Axis, Format, Model, RunConfig};
use super::output::{OutputBatch, Table};
use super::svg::{Plot, Series, Style};
use super::CliError;
use crate::analysis::{
    analyze_fringes, fit_ellipse, pearson_correlation, EllipseFit, FringeAnalysis, SinusoidFit,
};
use crate::cascade::{
    build_cascade, cascade_interfere, cascade_protocol_with, slices_for_od, CascadeModel,
};
use crate::hamiltonian::{build_heff, to_transfer_basis, unitarity_deviation};
use crate::interferometer::{
    sample_intensities, sample_phase_diagram, strong_readout, uniform_theta_grid, FringeSeries,
    ProtocolConfig, ProtocolRun,
};
use crate::transfer::{build_transfer_matrix, eigen2, ModeAmplitudes, TransferMatrix};

pub struct Outcome {
    pub summary: Value,
    pub batch: OutputBatch,
}

fn cjson(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

fn metadata(command: &str, cfg: &RunConfig) -> String {
    format!(
        "tool=mpbs version={} command={} config={}",
        env!("CARGO_PKG_VERSION"),
        command,
        cfg.to_json()
    )
}

fn table(
    command: &str,
    cfg: &RunConfig,
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
) -> String {
    Table {
        metadata: metadata(command, cfg),
        columns,
        rows,
    }
    .render(cfg.precision)
}

fn matrix_row(m: &TransferMatrix) -> Vec<f64> {
    vec![
        m.t.re,
        m.t.im,
        m.r.re,
        m.r.im,
        m.r_prime.re,
        m.r_prime.im,
        m.t_prime.re,
        m.t_prime.im,
    ]
}

fn matrix_columns() -> Vec<&'static str> {
    vec![
        "re_t", "im_t", "re_r", "im_r", "re_rp", "im_rp", "re_tp", "im_tp",
    ]
}

pub fn matrix(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let c = cfg.coupling()?;
    let m = build_transfer_matrix(&c)?;
    let d = m.diagnostics();
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Csv) {
        batch.add(
            cfg.output_path.join("matrix.csv"),
            table("matrix", cfg, matrix_columns(), vec![matrix_row(&m)]),
        );
    }
    let delta_psi = m.fringe_phase_difference();
    Ok(Outcome {
        summary: json!({
            "command": "matrix",
            "zeta": c.zeta,
            "eta": c.eta,
            "delta_ratio": c.delta_ratio,
            "t": cjson(m.t),
            "r": cjson(m.r),
            "r_prime": cjson(m.r_prime),
            "t_prime": cjson(m.t_prime),
            "delta_psi": delta_psi,
            "two_phi": delta_psi.map(f64::abs),
            "degenerate": d.degenerate,
            "unitarity_deviation": d.unitarity_deviation,
            "singular_values": d.singular_values,
            "gain_regime": d.gain_regime,
            "eigenvalues": d.eigenvalues.iter().map(|&z| cjson(z)).collect::<Vec<_>>(),
        }),
        batch,
    })
}

pub fn evolve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params();
    let h = build_heff(&params)?;
    let tau = cfg.evolve_tau_s.unwrap_or(params.tau_p);
    let u = to_transfer_basis(&h.propagator(tau)?);
    let state = h.evolve(
        ModeAmplitudes::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(cfg.probe_amplitude, 0.0),
        ),
        tau,
    )?;
    let (eigenvalues, _) = eigen2(&u);
    let bright = if (eigenvalues[0] - 1.0).norm() >= (eigenvalues[1] - 1.0).norm() {
        eigenvalues[0]
    } else {
        eigenvalues[1]
    };
    let coupling_sq = params.g_root_n * params.g_root_n + params.rabi_c * params.rabi_c;
    let zeta_total = coupling_sq * tau / params.kappa13;
    let closed_form = (-zeta_total / Complex64::new(1.0, params.delta / params.kappa13)).exp();
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Csv) {
        let tm = TransferMatrix::from_matrix(&u);
        batch.add(
            cfg.output_path.join("propagator.csv"),
            table("evolve", cfg, matrix_columns(), vec![matrix_row(&tm)]),
        );
    }
    Ok(Outcome {
        summary: json!({
            "command": "evolve",
            "tau_s": tau,
            "s": cjson(state.s),
            "a": cjson(state.a),
            "n_s": state.n_s(),
            "n_a": state.n_a(),
            "unitarity_deviation": unitarity_deviation(&u),
            "hermitian": h.is_hermitian(1e-12),
            "validity_warning": h.validity_warning(),
            "bright_eigenvalue": cjson(bright),
            "bright_eigenvalue_closed_form": cjson(closed_form),
        }),
        batch,
    })
}

/// Resolved single-mode or cascade model for one configuration.
enum Sim {
    Single {
        bs: TransferMatrix,
        run: ProtocolRun,
    },
    Cascade {
        model: CascadeModel,
        magnons: Vec<Complex64>,
        probe: Complex64,
        fringe: FringeSeries,
    },
}

impl Sim {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let c = cfg.coupling()?;
        match cfg.model {
            Model::Single => {
                let bs = build_transfer_matrix(&c)?;
                let read =
                    build_transfer_matrix(&strong_readout(c.delta_ratio, cfg.read_efficiency)?)?;
                let protocol = ProtocolConfig::new(
                    bs,
                    read,
                    Complex64::new(cfg.probe_amplitude, 0.0),
                    cfg.balance_mode,
                );
                let run = protocol.run(&uniform_theta_grid(cfg.theta_samples))?;
                Ok(Sim::Single { bs, run })
            }
            Model::Cascade => {
                let slices = cfg
                    .slices
                    .unwrap_or_else(|| slices_for_od(cfg.od, cfg.slices_per_unit_od));
                let model = build_cascade(&c, slices)?;
                let out = cascade_protocol_with(
                    &model,
                    cfg.probe_amplitude,
                    cfg.balance_mode,
                    cfg.theta_samples,
                )?;
                Ok(Sim::Cascade {
                    model,
                    magnons: out.prepared.magnons,
                    probe: out.probe,
                    fringe: out.fringe,
                })
            }
        }
    }

    fn fringe(&self) -> &FringeSeries {
        match self {
            Sim::Single { run, .. } => &run.fringe,
            Sim::Cascade { fringe, .. } => fringe,
        }
    }

    fn unitarity_deviation(&self) -> f64 {
        match self {
            Sim::Single { bs, .. } => bs.unitarity_deviation(),
            Sim::Cascade { model, .. } => model.unitarity_deviation(),
        }
    }

    fn slices(&self) -> usize {
        match self {
            Sim::Single { .. } => 1,
            Sim::Cascade { model, .. } => model.slices,
        }
    }

    /// Matrix-argument Δψ (single mode only).
    fn matrix_delta_psi(&self) -> Option<f64> {
        match self {
            Sim::Single { bs, .. } => bs.fringe_phase_difference(),
            Sim::Cascade { .. } => None,
        }
    }

    fn analysis(&self) -> Result<FringeAnalysis, CliError> {
        let f = self.fringe();
        Ok(analyze_fringes(&f.thetas, &f.n_s, &f.n_a)?)
    }

    fn scatter(&self, cfg: &RunConfig) -> Result<Vec<(f64, f64)>, CliError> {
        Ok(match self {
            Sim::Single { bs, run } => sample_phase_diagram(
                bs,
                run.prepared.s,
                run.probe,
                cfg.count,
                cfg.seed,
                cfg.noise_sigma,
            )?,
            Sim::Cascade {
                model,
                magnons,
                probe,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                sample_intensities(
                    &mut rng,
                    |th| cascade_interfere(model, magnons, *probe, th),
                    cfg.count,
                    cfg.noise_sigma,
                )?
            }
        })
    }

    fn model_json(&self) -> Value {
        match self {
            Sim::Single { run, .. } => json!({
                "model": "single",
                "stored_magnon": cjson(run.prepared.s),
                "leakage_n_a": run.prepared.n_a(),
                "probe": cjson(run.probe),
            }),
            Sim::Cascade { magnons, probe, .. } => json!({
                "model": "cascade",
                "stored_n_s": magnons.iter().map(|s| s.norm_sqr()).sum::<f64>(),
                "probe": cjson(*probe),
            }),
        }
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn sinusoid_curve(fit: &SinusoidFit, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|k| {
            let th = TAU * k as f64 / n as f64;
            (th, fit.eval(th))
        })
        .collect()
}

pub fn fringe(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sim = Sim::new(cfg)?;
    let fa = sim.analysis()?;
    let f = sim.fringe();
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Csv) {
        let rows = (0..f.thetas.len())
            .map(|i| vec![f.thetas[i], f.n_s[i], f.n_a[i]])
            .collect();
        batch.add(
            cfg.output_path.join("fringe.csv"),
            table("fringe", cfg, vec!["theta_rad", "n_s", "n_a"], rows),
        );
    }
    if cfg.wants(Format::Svg) {
        let plot = Plot {
            title: "Interference fringes".into(),
            x_label: "theta (rad)".into(),
            y_label: "intensity".into(),
            series: vec![
                Series {
                    label: "n_s".into(),
                    points: f
                        .thetas
                        .iter()
                        .copied()
                        .zip(f.n_s.iter().copied())
                        .collect(),
                    style: Style::Markers,
                    color: 0,
                },
                Series {
                    label: "n_a".into(),
                    points: f
                        .thetas
                        .iter()
                        .copied()
                        .zip(f.n_a.iter().copied())
                        .collect(),
                    style: Style::Markers,
                    color: 1,
                },
                Series {
                    label: "n_s fit".into(),
                    points: sinusoid_curve(&fa.fit_s, 200),
                    style: Style::Line,
                    color: 0,
                },
                Series {
                    label: "n_a fit".into(),
                    points: sinusoid_curve(&fa.fit_a, 200),
                    style: Style::Line,
                    color: 1,
                },
            ],
        };
        batch.add(cfg.output_path.join("fringe.svg"), plot.render());
    }
    let mut summary = json!({
        "command": "fringe",
        "slices": sim.slices(),
        "samples": f.thetas.len(),
        "delta_psi": fa.delta_psi,
        "two_phi": fa.delta_psi.map(f64::abs),
        "delta_psi_matrix": sim.matrix_delta_psi(),
        "visibility_s": f.visibility_s,
        "visibility_a": f.visibility_a,
        "pearson": fa.pearson,
        "unitarity_deviation": sim.unitarity_deviation(),
    });
    if let Sim::Single { run, .. } = &sim {
        let mean = run.retrieved.iter().sum::<f64>() / run.retrieved.len() as f64;
        summary = merge(summary, json!({ "mean_retrieved": mean }));
    }
    Ok(Outcome {
        summary: merge(summary, sim.model_json()),
        batch,
    })
}

fn ellipse_curve(fit: &EllipseFit, n: usize) -> Vec<(f64, f64)> {
    let c = fit.conic;
    let (x0, y0) = fit.center;
    let f0 = c[0] * x0 * x0 + c[1] * x0 * y0 + c[2] * y0 * y0 + c[3] * x0 + c[4] * y0 + c[5];
    (0..=n)
        .filter_map(|k| {
            let phi = TAU * k as f64 / n as f64;
            let (dx, dy) = (phi.cos(), phi.sin());
            let q = c[0] * dx * dx + c[1] * dx * dy + c[2] * dy * dy;
            let rho2 = -f0 / q;
            (rho2 >= 0.0).then(|| (x0 + rho2.sqrt() * dx, y0 + rho2.sqrt() * dy))
        })
        .collect()
}

fn ellipse_json(fit: &Result<EllipseFit, crate::MpbsError>) -> Value {
    match fit {
        Ok(e) => json!({
            "delta": e.delta,
            "degeneracy": e.degeneracy.as_str(),
            "method": e.method.as_str(),
            "center": [e.center.0, e.center.1],
            "conic": e.conic,
            "rms_residual": e.rms_residual,
            "normalized": e.normalized,
            "sign_ambiguous": true,
        }),
        Err(err) => json!({ "error": err.to_string() }),
    }
}

fn scatter_plot(title: &str, points: &[(f64, f64)], fit: Option<&EllipseFit>) -> String {
    let mut series = vec![Series {
        label: "samples".into(),
        points: points.to_vec(),
        style: Style::Markers,
        color: 0,
    }];
    if let Some(f) = fit.filter(|f| f.degeneracy == crate::analysis::Degeneracy::None) {
        series.push(Series {
            label: "ellipse fit".into(),
            points: ellipse_curve(f, 240),
            style: Style::Line,
            color: 1,
        });
    }
    Plot {
        title: title.into(),
        x_label: "n_s".into(),
        y_label: "n_a".into(),
        series,
    }
    .render()
}

pub fn phase_diagram(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sim = Sim::new(cfg)?;
    let points = sim.scatter(cfg)?;
    let fit = fit_ellipse(&points);
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fa = sim.analysis()?;
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Csv) {
        let rows = points
            .iter()
            .enumerate()
            .map(|(i, p)| vec![i as f64, p.0, p.1])
            .collect();
        batch.add(
            cfg.output_path.join("phase_diagram.csv"),
            table("phase-diagram", cfg, vec!["index", "n_s", "n_a"], rows),
        );
    }
    if cfg.wants(Format::Svg) {
        batch.add(
            cfg.output_path.join("phase_diagram.svg"),
            scatter_plot("Phase diagram", &points, fit.as_ref().ok()),
        );
    }
    let summary = json!({
        "command": "phase-diagram",
        "count": points.len(),
        "seed": cfg.seed,
        "slices": sim.slices(),
        "ellipse": ellipse_json(&fit),
        "delta": fit.as_ref().ok().map(|f| f.delta),
        "delta_psi": fa.delta_psi,
        "delta_psi_matrix": sim.matrix_delta_psi(),
        "pearson": pearson_correlation(&xs, &ys).ok(),
        "visibility_s": sim.fringe().visibility_s,
        "visibility_a": sim.fringe().visibility_a,
        "unitarity_deviation": sim.unitarity_deviation(),
    });
    Ok(Outcome {
        summary: merge(summary, sim.model_json()),
        batch,
    })
}

fn sweep_values(cfg: &RunConfig) -> Vec<f64> {
    let (lo, hi) = cfg.axis.default_range();
    let start = cfg.sweep_start.unwrap_or(lo);
    let stop = cfg.sweep_stop.unwrap_or(hi);
    if cfg.points == 1 {
        return vec![start];
    }
    let n = cfg.points - 1;
    (0..=n)
        .map(|k| start + (stop - start) * k as f64 / n as f64)
        .collect()
}

fn at_axis(cfg: &RunConfig, v: f64) -> RunConfig {
    let mut c = cfg.clone();
    match cfg.axis {
        Axis::Delta => c.delta_hz = v,
        Axis::Od => c.od = v,
        Axis::Zeta => c.zeta = Some(v),
    }
    c
}

fn strictly(values: &[f64], cmp: impl Fn(f64, f64) -> bool) -> bool {
    values.len() >= 2
        && values.iter().all(|v| v.is_finite())
        && values.windows(2).all(|w| cmp(w[0], w[1]))
}

pub fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let values = sweep_values(cfg);
    let rows: Vec<Vec<f64>> = values
        .par_iter()
        .map(|&v| -> Result<Vec<f64>, CliError> {
            let point = at_axis(cfg, v);
            point.validate()?;
            let sim = Sim::new(&point)?;
            let fa = sim.analysis()?;
            let f = sim.fringe();
            Ok(vec![
                v,
                fa.two_phi(),
                f.visibility_s,
                f.visibility_a,
                fa.pearson.unwrap_or(f64::NAN),
                sim.unitarity_deviation(),
            ])
        })
        .collect::<Result<_, _>>()?;
    let phis: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Csv) {
        batch.add(
            cfg.output_path.join("sweep.csv"),
            table(
                "sweep",
                cfg,
                vec![
                    "axis_value",
                    "two_phi_rad",
                    "visibility_s",
                    "visibility_a",
                    "pearson",
                    "unitarity_deviation",
                ],
                rows.clone(),
            ),
        );
    }
    if cfg.wants(Format::Svg) {
        let plot = Plot {
            title: format!("Fringe phase difference vs {}", cfg.axis.as_str()),
            x_label: match cfg.axis {
                Axis::Delta => "detuning (Hz)".into(),
                Axis::Od => "OD".into(),
                Axis::Zeta => "zeta".into(),
            },
            y_label: "2phi (rad)".into(),
            series: vec![Series {
                label: "2phi".into(),
                points: values.iter().copied().zip(phis.iter().copied()).collect(),
                style: Style::Line,
                color: 0,
            }],
        };
        batch.add(cfg.output_path.join("sweep.svg"), plot.render());
    }
    let finite: Vec<f64> = phis.iter().copied().filter(|v| v.is_finite()).collect();
    Ok(Outcome {
        summary: json!({
            "command": "sweep",
            "axis": cfg.axis.as_str(),
            "model": match cfg.model { Model::Single => "single", Model::Cascade => "cascade" },
            "points": rows.len(),
            "unresolved": phis.len() - finite.len(),
            "two_phi_first": phis.first(),
            "two_phi_last": phis.last(),
            "two_phi_min": finite.iter().copied().reduce(f64::min),
            "two_phi_max": finite.iter().copied().reduce(f64::max),
            "strictly_increasing": strictly(&phis, |a, b| b > a),
            "strictly_decreasing": strictly(&phis, |a, b| b < a),
            "max_unitarity_deviation": rows.iter().map(|r| r[5]).fold(0.0, f64::max),
        }),
        batch,
    })
}

/// Read `(n_s, n_a)` pairs from a CSV: `#` lines skipped, optional header,
/// columns `n_s`/`n_a` by name or else the last two.
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut cols: Option<(usize, usize)> = None;
    let mut points = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let numeric: Option<Vec<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        match numeric {
            None if points.is_empty() && cols.is_none() => {
                let find = |name: &str| rec.iter().position(|f| f == name);
                cols = match (find("n_s"), find("n_a")) {
                    (Some(x), Some(y)) => Some((x, y)),
                    _ if rec.len() >= 2 => Some((rec.len() - 2, rec.len() - 1)),
                    _ => None,
                };
            }
            None => {
                return Err(CliError::Domain(format!(
                    "{}: non-numeric data row {}",
                    path.display(),
                    line + 1
                )))
            }
            Some(v) => {
                let (x, y) = cols.unwrap_or((v.len().saturating_sub(2), v.len().saturating_sub(1)));
                if v.len() < 2 || x >= v.len() || y >= v.len() {
                    return Err(CliError::Domain(format!(
                        "{}: row {} has too few columns",
                        path.display(),
                        line + 1
                    )));
                }
                points.push((v[x], v[y]));
            }
        }
    }
    Ok(points)
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Domain("fit needs --input PATH".into()))?;
    let points = read_points(input)?;
    let fit = fit_ellipse(&points)?;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut batch = OutputBatch::default();
    if cfg.wants(Format::Svg) {
        batch.add(
            cfg.output_path.join("fit.svg"),
            scatter_plot("Ellipse fit", &points, Some(&fit)),
        );
    }
    Ok(Outcome {
        summary: merge(
            json!({
                "command": "fit",
                "input": input.display().to_string(),
                "points": points.len(),
                "pearson": pearson_correlation(&xs, &ys).ok(),
            }),
            ellipse_json(&Ok(fit)),
        ),
        batch,
    })
}
