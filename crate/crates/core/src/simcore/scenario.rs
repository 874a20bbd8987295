use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineGains, Method};
use crate::currctl::CurrentGains;
use crate::error::{FieldError, ScenarioError};
use crate::estimator::EstimatorConfig;
use crate::plant::{GridProfile, LoadProfile, PlantParams};
use crate::simcore::MetricsConfig;
use crate::voltctl::VoltageGains;

/// Which loops are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Voltage loop feeding the current loop.
    #[default]
    Cascade,
    /// Current loop only, references from the schedule.
    CurrentReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// defaults to the first DC voltage reference
    pub v_dc: Option<f64>,
    pub i_d: f64,
    pub i_q: f64,
}

/// Piecewise-constant references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSchedule {
    /// `(t_s, V)` steps; empty means `plant.v_dc_ref`.
    pub v_dc: Vec<(f64, f64)>,
    /// `(t_s, i_d A, i_q A)` steps used in current-reference mode.
    pub i_dq: Vec<(f64, f64, f64)>,
}

impl ReferenceSchedule {
    pub fn v_dc_at(&self, t: f64, nominal: f64) -> f64 {
        let mut v = nominal;
        for &(start, x) in &self.v_dc {
            if t >= start {
                v = x;
            } else {
                break;
            }
        }
        v
    }

    pub fn i_dq_at(&self, t: f64) -> [f64; 2] {
        let mut v = [0.0, 0.0];
        for &(start, d, q) in &self.i_dq {
            if t >= start {
                v = [d, q];
            } else {
                break;
            }
        }
        v
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// simulated time (s)
    pub horizon: f64,
    /// integrator step (s)
    pub dt: f64,
    /// keep every n-th step; unset picks the smallest n giving at most 1e6 rows
    #[serde(default)]
    pub decimation: Option<usize>,
    /// recompute the controls every n-th step and hold them in between
    #[serde(default = "one")]
    pub control_divider: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub controller: Method,
    /// current-loop controller in cascade mode; defaults to `controller`
    #[serde(default)]
    pub inner_controller: Option<Method>,
    /// replace the current loop by exact tracking of the power command
    #[serde(default)]
    pub ideal_current_loop: bool,
    /// hold v_dc constant (ideal DC source/sink)
    #[serde(default)]
    pub stiff_dc_link: bool,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub load: LoadProfile,
    #[serde(default)]
    pub grid: GridProfile,
    #[serde(default)]
    pub reference: ReferenceSchedule,
    #[serde(default)]
    pub voltage: VoltageGains,
    #[serde(default)]
    pub current: CurrentGains,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub baselines: BaselineGains,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

pub const MAX_ROWS: usize = 1_000_000;

fn one() -> usize {
    1
}

impl Scenario {
    /// Parses TOML, applies `path=value` overrides, then validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let sc: Scenario = value.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn effective_decimation(&self) -> usize {
        self.decimation
            .unwrap_or_else(|| (self.steps() + 1).div_ceil(MAX_ROWS).max(1))
    }

    pub fn inner_method(&self) -> Method {
        self.inner_controller.unwrap_or(self.controller)
    }

    pub fn v_dc0(&self) -> f64 {
        self.initial
            .v_dc
            .unwrap_or_else(|| self.reference.v_dc_at(0.0, self.plant.v_dc_ref))
    }

    /// All constraint violations, each with its field path.
    pub fn validation_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |path: String, msg: String| errs.push(FieldError::new(path, msg));

        if self.name.trim().is_empty() {
            push("name".into(), "must not be empty".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            push("dt".into(), format!("must be finite and > 0, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= 10.0 * self.dt) {
            push("horizon".into(), format!("must be >= 10 * dt, got {}", self.horizon));
        }
        if self.decimation == Some(0) {
            push("decimation".into(), "must be >= 1".into());
        }
        if self.control_divider == 0 {
            push("control_divider".into(), "must be >= 1".into());
        }
        if let Err((f, m)) = self.plant.check() {
            push(format!("plant.{f}"), m);
        }
        if let Some(v) = self.initial.v_dc {
            if !(v.is_finite() && v > 0.0) {
                push("initial.v_dc".into(), format!("must be finite and > 0, got {v}"));
            }
        }
        for (f, v) in [("initial.i_d", self.initial.i_d), ("initial.i_q", self.initial.i_q)] {
            if !v.is_finite() {
                push(f.into(), "must be finite".into());
            }
        }
        if let Err((f, m)) = self.load.check() {
            push(format!("load.{f}"), m);
        }
        if let Err((f, m)) = self.grid.check() {
            push(format!("grid.{f}"), m);
        }
        for (k, w) in self.reference.v_dc.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                push(format!("reference.v_dc[{}]", k + 1), "times must be strictly increasing".into());
            }
        }
        for (k, &(_, v)) in self.reference.v_dc.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                push(format!("reference.v_dc[{k}]"), "voltage must be finite and > 0".into());
            }
        }
        for (k, w) in self.reference.i_dq.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                push(format!("reference.i_dq[{}]", k + 1), "times must be strictly increasing".into());
            }
        }
        if self.mode == Mode::CurrentReference && self.reference.i_dq.is_empty() {
            push("reference.i_dq".into(), "required in current_reference mode".into());
        }
        if let Err((f, m)) = self.voltage.check() {
            push(format!("voltage.{f}"), m);
        }
        if let Err((f, m)) = self.current.check() {
            push(format!("current.{f}"), m);
        }
        if !(self.estimator.eso_bandwidth.is_finite() && self.estimator.eso_bandwidth > 0.0) {
            push("estimator.eso_bandwidth".into(), "must be finite and > 0".into());
        }
        if !self.estimator.rho_hat0.is_finite() {
            push("estimator.rho_hat0".into(), "must be finite".into());
        }
        if let Err((f, m)) = self.baselines.check() {
            push(format!("baselines.{f}"), m);
        }
        if let Err((f, m)) = self.metrics.check() {
            push(format!("metrics.{f}"), m);
        }
        // declared disturbance bounds must cover the load profile
        if errs.is_empty() {
            if let Err(m) = self.load.check_bounds(
                self.horizon,
                self.plant.v_dc_ref,
                self.voltage.delta,
                self.voltage.eps_rate,
            ) {
                errs.push(FieldError::new("load", format!("{m} (see voltage.delta / voltage.eps_rate)")));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }
}

/// Applies one `dotted.path=value` override to a parsed document.
///
/// The value is read as a TOML literal when possible and as a bare string
/// otherwise, so `controller=pi_pr` and `voltage.delta=900` both work.
pub fn apply_override(doc: &mut toml::Value, expr: &str) -> Result<(), ScenarioError> {
    let bad = |reason: &str| ScenarioError::Override {
        expr: expr.to_string(),
        reason: reason.to_string(),
    };
    let (path, raw) = expr.split_once('=').ok_or_else(|| bad("expected path=value"))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(|p| p.trim().is_empty()) {
        return Err(bad("empty path segment"));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').map(str::trim).collect();
    let mut cur = doc;
    for key in &keys[..keys.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| bad("path crosses a non-table value"))?;
        cur = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur.as_table_mut().ok_or_else(|| bad("path crosses a non-table value"))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
