//! Run configuration: a preset plus JSON overrides, validated field by field.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stix_core::dynamics::{IntegrationGrid, ModelKind};
use stix_core::model::SystemParams;
use stix_core::sweeps::{linspace, CalibrationOptions, Scheme, SCHEMA_VERSION};
use stix_core::Error;

/// Either an explicit list or `{start, stop, points}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, points } => linspace(*start, *stop, *points),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrids {
    /// TPE areas in units of the calibrated π.
    pub areas_pi: Axis,
    pub delays_ps: Axis,
    /// Stimulating-pulse areas (rad) for `sweep-stim`.
    pub stim_areas_rad: Axis,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            areas_pi: Axis::Range { start: 0.0, stop: 2.0, points: 51 },
            delays_ps: Axis::Range { start: -10.0, stop: 40.0, points: 51 },
            stim_areas_rad: Axis::Range { start: 0.0, stop: 2.0 * PI, points: 41 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpeSpec {
    /// Area in units of the calibrated π (nominal π when calibration is off).
    pub area_pi: f64,
}

impl Default for TpeSpec {
    fn default() -> Self {
        Self { area_pi: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimSpec {
    pub area_rad: f64,
}

impl Default for StimSpec {
    fn default() -> Self {
        Self { area_rad: PI }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Also write gnuplot scripts next to the data files.
    pub gnuplot: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), gnuplot: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub preset: String,
    pub system: SystemParams,
    pub model: ModelKind,
    pub scheme: Scheme,
    pub tpe: TpeSpec,
    /// Used by the stiX scheme only.
    pub stim: StimSpec,
    /// Locate π and π/2 numerically; otherwise use nominal areas.
    pub calibrate: bool,
    pub calibration: CalibrationOptions,
    pub grid: IntegrationGrid,
    pub sweep: SweepGrids,
    pub output: OutputSpec,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset("table1").expect("built-in preset")
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self, Error> {
        let system = SystemParams::preset(name)
            .ok_or_else(|| config_err("preset", format!("unknown preset {name:?}; expected table1 or experiment")))?;
        Ok(Self {
            schema_version: SCHEMA_VERSION.into(),
            preset: name.into(),
            system,
            model: ModelKind::Full,
            scheme: Scheme::Stix,
            tpe: TpeSpec::default(),
            stim: StimSpec::default(),
            calibrate: true,
            calibration: CalibrationOptions::default(),
            grid: IntegrationGrid::default(),
            sweep: SweepGrids::default(),
            output: OutputSpec::default(),
            jobs: 1,
        })
    }

    /// Parses a JSON document. Omitted blocks take their defaults and
    /// `system` fields overlay the named preset.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let doc: Map<String, Value> = serde_json::from_str(text)?;
        match doc.get("schema_version") {
            Some(Value::String(v)) => check_schema_version(v)?,
            Some(_) => return Err(config_err("schema_version", "must be a string such as \"1.0\"")),
            None => return Err(config_err("schema_version", "missing")),
        }
        let preset = match doc.get("preset") {
            None => "table1".to_string(),
            Some(Value::String(p)) => p.clone(),
            Some(_) => return Err(config_err("preset", "must be a string")),
        };
        let mut merged = serde_json::to_value(Self::from_preset(&preset)?)?;
        let base = merged.as_object_mut().expect("config serializes to an object");
        for (key, value) in doc {
            match (base.get_mut(&key), value) {
                (Some(Value::Object(slot)), Value::Object(over)) => {
                    for (k, v) in over {
                        slot.insert(k, v);
                    }
                }
                (Some(slot), v) => *slot = v,
                (None, _) => {
                    let known: Vec<&String> = base.keys().collect();
                    return Err(config_err(&key, format!("unknown field; expected one of {known:?}")));
                }
            }
        }
        let cfg = Self::from_value_by_field(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_value_by_field(v: Value) -> Result<Self, Error> {
        if let Value::Object(m) = &v {
            for (key, val) in m {
                let res = match key.as_str() {
                    "system" => serde_json::from_value::<SystemParams>(val.clone()).map(drop),
                    "model" => serde_json::from_value::<ModelKind>(val.clone()).map(drop),
                    "scheme" => serde_json::from_value::<Scheme>(val.clone()).map(drop),
                    "tpe" => serde_json::from_value::<TpeSpec>(val.clone()).map(drop),
                    "stim" => serde_json::from_value::<StimSpec>(val.clone()).map(drop),
                    "calibration" => serde_json::from_value::<CalibrationOptions>(val.clone()).map(drop),
                    "grid" => serde_json::from_value::<IntegrationGrid>(val.clone()).map(drop),
                    "sweep" => serde_json::from_value::<SweepGrids>(val.clone()).map(drop),
                    "output" => serde_json::from_value::<OutputSpec>(val.clone()).map(drop),
                    _ => Ok(()),
                };
                res.map_err(|e| config_err(key, e.to_string()))?;
            }
        }
        serde_json::from_value(v).map_err(|e| config_err("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_schema_version(&self.schema_version)?;
        self.system.validate().map_err(|e| prefix("system", e))?;
        let sigma_min = self.system.sigma_tpe_ps().min(self.system.sigma_stim_ps());
        self.grid.validate(sigma_min).map_err(|e| prefix("grid", e))?;
        if !(self.tpe.area_pi >= 0.0 && self.tpe.area_pi.is_finite()) {
            return Err(config_err("tpe.area_pi", "must be a finite value >= 0"));
        }
        if !(self.stim.area_rad >= 0.0 && self.stim.area_rad.is_finite()) {
            return Err(config_err("stim.area_rad", "must be a finite value >= 0"));
        }
        if !(self.calibration.a_max > 0.0) || self.calibration.coarse_points < 5 || !(self.calibration.rel_tol > 0.0) {
            return Err(config_err("calibration", "need a_max > 0, coarse_points >= 5 and rel_tol > 0"));
        }
        for (name, axis) in [
            ("sweep.areas_pi", &self.sweep.areas_pi),
            ("sweep.delays_ps", &self.sweep.delays_ps),
            ("sweep.stim_areas_rad", &self.sweep.stim_areas_rad),
        ] {
            let v = axis.values();
            if v.is_empty() {
                return Err(config_err(name, "grid must not be empty"));
            }
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_err(name, "grid must be finite and strictly increasing"));
            }
        }
        if self.jobs == 0 {
            return Err(config_err("jobs", "must be at least 1"));
        }
        Ok(())
    }
}

fn prefix(block: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } if !field.starts_with(block) => {
            Error::Config { field: format!("{block}.{field}"), message }
        }
        other => other,
    }
}

/// Accepts any `1.x` version.
pub fn check_schema_version(v: &str) -> Result<(), Error> {
    let major = v.split('.').next().unwrap_or("");
    let ours = SCHEMA_VERSION.split('.').next().unwrap_or("");
    if major != ours {
        return Err(config_err(
            "schema_version",
            format!("unsupported major version {v:?}; this build reads {ours}.x"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_uses_preset() {
        let c = RunConfig::from_json(r#"{"schema_version": "1.0", "preset": "experiment"}"#).unwrap();
        assert_eq!(c.system.delay_ps, 7.0);
        assert_eq!(c.sweep.areas_pi.values().len(), 51);
    }

    #[test]
    fn overrides_merge_into_system() {
        let c = RunConfig::from_json(r#"{"schema_version": "1.0", "system": {"kappa_per_ps": 0.3}}"#).unwrap();
        assert_eq!(c.system.kappa_per_ps, 0.3);
        assert_eq!(c.system.binding_energy_mev, 4.0);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_json(r#"{"schema_version": "1.0", "sweep": {"areas_pi": [0.5, 1.0]}, "jobs": 3}"#).unwrap();
        let echo = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&echo).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match RunConfig::from_json(text).unwrap_err() {
            Error::Config { field, .. } => field,
            e => panic!("unexpected {e}"),
        };
        assert_eq!(field(r#"{"schema_version": "1.0", "system": {"n_max": 0}}"#), "system.n_max");
        assert_eq!(field(r#"{"schema_version": "1.0", "system": {"kapa": 1}}"#), "system");
        assert_eq!(field(r#"{"schema_version": "2.0"}"#), "schema_version");
        assert_eq!(field(r#"{"schema_version": "1.0", "jobs": 0}"#), "jobs");
        assert_eq!(field(r#"{"schema_version": "1.0", "colour": 1}"#), "colour");
        assert_eq!(field(r#"{"schema_version": "1.0", "grid": {"free_step_ps": 1.0}}"#), "grid.free_step_ps");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = RunConfig::from_json("{\n\"schema_version\": \"1.0\",\n}").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }
}
