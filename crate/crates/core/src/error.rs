//! Error types.

use std::fmt;

use thiserror::Error;

use crate::simcore::RunLog;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("DC-link voltage must stay positive, got {0} V")]
    NonPositiveVdc(f64),
    #[error("t = {t} s lies outside the horizon [0, {horizon}] s")]
    OutsideHorizon { t: f64, horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("power base p_v must be non-zero")]
    ZeroPowerBase,
    #[error("grid voltage v_d must be non-zero")]
    ZeroGridVoltage,
    #[error("DC-link voltage must be positive, got {0} V")]
    NonPositiveVdc(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// One failed constraint, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad override `{expr}`: {reason}")]
    Override { expr: String, reason: String },
    #[error("scenario is invalid:\n{}", join_fields(.0))]
    Invalid(Vec<FieldError>),
}

fn join_fields(errs: &[FieldError]) -> String {
    errs.iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    /// Run stopped early; `partial` holds the rows logged before the abort.
    #[error("simulation aborted at t = {t} s after {} samples: {reason}", .partial.len())]
    Aborted {
        t: f64,
        reason: String,
        partial: Box<RunLog>,
    },
}
