//! Flat JSON run configuration. Frequencies are given in Hz and converted to
//! angular units when building [`MpbsParams`].

use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::transfer::{derive_dimensionless, DimensionlessCoupling, MpbsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Single,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Delta,
    Od,
    Zeta,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Delta => "delta",
            Axis::Od => "od",
            Axis::Zeta => "zeta",
        }
    }

    /// Default sweep range in axis units (Hz for delta).
    pub fn default_range(&self) -> (f64, f64) {
        match self {
            Axis::Delta => (0.0, 60e6),
            Axis::Od => (10.0, 40.0),
            Axis::Zeta => (0.1, 5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub delta_hz: f64,
    pub kappa13_hz: f64,
    pub rabi_c_hz: f64,
    pub g_root_n_hz: f64,
    pub tau_p_s: f64,
    pub od: f64,
    pub eta_per_od: f64,
    /// Overrides the derived ζ = Ω_c²τ_p/κ₁₃.
    pub zeta: Option<f64>,
    /// Overrides the derived η = β·OD.
    pub eta: Option<f64>,
    pub probe_amplitude: f64,
    pub balance_mode: bool,
    pub theta_samples: usize,
    pub count: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Target retrieval efficiency of the readout pulse.
    pub read_efficiency: f64,
    /// Evolution time for `evolve`; defaults to `tau_p_s`.
    pub evolve_tau_s: Option<f64>,
    pub model: Model,
    /// Fixed slice count; otherwise `slices_per_unit_od` sets it from OD.
    pub slices: Option<usize>,
    pub slices_per_unit_od: f64,
    pub axis: Axis,
    pub sweep_start: Option<f64>,
    pub sweep_stop: Option<f64>,
    pub points: usize,
    pub input: Option<PathBuf>,
    pub output_path: PathBuf,
    #[serde(deserialize_with = "formats_from_list_or_string")]
    pub formats: Vec<Format>,
    pub precision: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            delta_hz: 30e6,
            kappa13_hz: 3e6,
            rabi_c_hz: 5e6,
            g_root_n_hz: 5e6,
            tau_p_s: 50e-9,
            od: 40.0,
            eta_per_od: 0.05,
            zeta: None,
            eta: None,
            probe_amplitude: 1.0,
            balance_mode: true,
            theta_samples: 64,
            count: 500,
            seed: 0,
            noise_sigma: 0.0,
            read_efficiency: 0.98,
            evolve_tau_s: None,
            model: Model::Single,
            slices: None,
            slices_per_unit_od: 0.5,
            axis: Axis::Delta,
            sweep_start: None,
            sweep_stop: None,
            points: 61,
            input: None,
            output_path: PathBuf::from("."),
            formats: vec![Format::Csv],
            precision: 12,
        }
    }
}

fn formats_from_list_or_string<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Format>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        List(Vec<Format>),
        Joined(String),
    }
    match Raw::deserialize(d)? {
        Raw::List(v) => Ok(v),
        Raw::Joined(s) => s
            .split(',')
            .map(|part| match part.trim() {
                "csv" => Ok(Format::Csv),
                "svg" => Ok(Format::Svg),
                other => Err(serde::de::Error::custom(format!(
                    "unknown format `{other}`, expected csv or svg"
                ))),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(key: &str, reason: &str) -> ConfigError {
    ConfigError(format!("invalid value for `{key}`: {reason}"))
}

/// Interpret a `--key=value` string: JSON literal if it parses, else string.
pub fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parse JSON text (an object), apply overrides in order, then validate.
    pub fn from_json_with_overrides(
        text: &str,
        overrides: &[(String, Value)],
    ) -> Result<Self, ConfigError> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("config parse error: {e}")))?;
        let Value::Object(mut map) = root else {
            return Err(ConfigError("config must be a JSON object".into()));
        };
        apply_overrides(&mut map, overrides);
        let cfg: RunConfig = serde_json::from_value(Value::Object(map))
            .map_err(|e| ConfigError(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            ("delta_hz", self.delta_hz),
            ("kappa13_hz", self.kappa13_hz),
            ("rabi_c_hz", self.rabi_c_hz),
            ("g_root_n_hz", self.g_root_n_hz),
            ("tau_p_s", self.tau_p_s),
            ("od", self.od),
            ("eta_per_od", self.eta_per_od),
            ("probe_amplitude", self.probe_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("read_efficiency", self.read_efficiency),
            ("slices_per_unit_od", self.slices_per_unit_od),
        ];
        for (k, v) in finite {
            if !v.is_finite() {
                return Err(bad(k, "must be finite"));
            }
        }
        let positive = [
            ("kappa13_hz", self.kappa13_hz),
            ("tau_p_s", self.tau_p_s),
            ("eta_per_od", self.eta_per_od),
            ("slices_per_unit_od", self.slices_per_unit_od),
        ];
        for (k, v) in positive {
            if v <= 0.0 {
                return Err(bad(k, "must be > 0"));
            }
        }
        let non_negative = [
            ("od", self.od),
            ("rabi_c_hz", self.rabi_c_hz),
            ("g_root_n_hz", self.g_root_n_hz),
            ("probe_amplitude", self.probe_amplitude),
            ("noise_sigma", self.noise_sigma),
        ];
        for (k, v) in non_negative {
            if v < 0.0 {
                return Err(bad(k, "must be >= 0"));
            }
        }
        for (k, v) in [
            ("zeta", self.zeta),
            ("eta", self.eta),
            ("evolve_tau_s", self.evolve_tau_s),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(k, "must be finite and >= 0"));
                }
            }
        }
        for (k, v) in [
            ("sweep_start", self.sweep_start),
            ("sweep_stop", self.sweep_stop),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(bad(k, "must be finite"));
            }
        }
        if !(self.read_efficiency > 0.0 && self.read_efficiency < 1.0) {
            return Err(bad("read_efficiency", "must lie in (0, 1)"));
        }
        if self.theta_samples < 3 {
            return Err(bad("theta_samples", "must be >= 3"));
        }
        if self.count == 0 {
            return Err(bad("count", "must be >= 1"));
        }
        if self.points == 0 {
            return Err(bad("points", "must be >= 1"));
        }
        if self.slices == Some(0) {
            return Err(bad("slices", "must be >= 1"));
        }
        if self.precision == 0 || self.precision > 17 {
            return Err(bad("precision", "must lie in 1..=17"));
        }
        if self.formats.is_empty() {
            return Err(bad("formats", "must name at least one of csv, svg"));
        }
        if self.zeta == Some(0.0) && self.coupling_eta() > 0.0 {
            return Err(bad("eta", "must be 0 when zeta is 0"));
        }
        Ok(())
    }

    pub fn params(&self) -> MpbsParams {
        MpbsParams {
            delta: TAU * self.delta_hz,
            kappa13: TAU * self.kappa13_hz,
            rabi_c: TAU * self.rabi_c_hz,
            g_root_n: TAU * self.g_root_n_hz,
            tau_p: self.tau_p_s,
            od: self.od,
            eta_per_od: self.eta_per_od,
        }
    }

    fn coupling_eta(&self) -> f64 {
        self.eta.unwrap_or(self.eta_per_od * self.od)
    }

    /// Physical coupling with any explicit ζ or η applied on top.
    pub fn coupling(&self) -> crate::Result<DimensionlessCoupling> {
        let derived = derive_dimensionless(&self.params())?;
        DimensionlessCoupling::new(
            self.zeta.unwrap_or(derived.zeta),
            self.eta.unwrap_or(derived.eta),
            derived.delta_ratio,
        )
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn apply_overrides(map: &mut Map<String, Value>, overrides: &[(String, Value)]) {
    for (k, v) in overrides {
        map.insert(k.replace('-', "_"), v.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(
            RunConfig::from_json_with_overrides("{}", &[]).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn operating_point() {
        let cfg =
            RunConfig::from_json_with_overrides(r#"{"delta_hz": 30e6, "od": 40}"#, &[]).unwrap();
        let p = cfg.params();
        assert!((p.delta / TAU - 30e6).abs() < 1e-6);
        assert_eq!(p.od, 40.0);
    }

    #[test]
    fn negative_od_named() {
        let err = RunConfig::from_json_with_overrides(r#"{"od": -1}"#, &[]).unwrap_err();
        assert!(err.0.contains("`od`"), "{}", err.0);
    }

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::from_json_with_overrides(r#"{"odd": 1}"#, &[]).unwrap_err();
        assert!(err.0.contains("odd"), "{}", err.0);
    }

    #[test]
    fn parse_error_has_position() {
        let err = RunConfig::from_json_with_overrides("{\n  \"od\": ,\n}", &[]).unwrap_err();
        assert!(err.0.contains("line 2"), "{}", err.0);
    }

    #[test]
    fn overrides_take_precedence() {
        let ov = vec![
            ("od".to_string(), override_value("12.5")),
            ("model".to_string(), override_value("cascade")),
            ("formats".to_string(), override_value("csv,svg")),
            ("balance-mode".to_string(), override_value("false")),
        ];
        let cfg = RunConfig::from_json_with_overrides(r#"{"od": 3}"#, &ov).unwrap();
        assert_eq!(cfg.od, 12.5);
        assert_eq!(cfg.model, Model::Cascade);
        assert_eq!(cfg.formats, vec![Format::Csv, Format::Svg]);
        assert!(!cfg.balance_mode);
    }

    #[test]
    fn explicit_coupling() {
        let ov = vec![
            ("zeta".to_string(), override_value("0.5")),
            ("delta_hz".to_string(), override_value("0")),
        ];
        let cfg = RunConfig::from_json_with_overrides("{}", &ov).unwrap();
        let c = cfg.coupling().unwrap();
        assert_eq!(c.zeta, 0.5);
        assert_eq!(c.eta, 2.0);
        assert_eq!(c.delta_ratio, 0.0);
    }
}
