//! Scenario files shipped with the crate.

use crate::error::ScenarioError;
use crate::simcore::Scenario;

/// `(name, TOML text)` of every bundled scenario.
pub const BUNDLED: [(&str, &str); 8] = [
    ("voltage_compare", include_str!("../scenarios/voltage_compare.toml")),
    ("current_compare", include_str!("../scenarios/current_compare.toml")),
    ("estimation", include_str!("../scenarios/estimation.toml")),
    ("chattering", include_str!("../scenarios/chattering.toml")),
    ("freq_ramp", include_str!("../scenarios/freq_ramp.toml")),
    ("lr_sweep", include_str!("../scenarios/lr_sweep.toml")),
    ("verify", include_str!("../scenarios/verify.toml")),
    ("equilibrium", include_str!("../scenarios/equilibrium.toml")),
];

pub fn source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Loads a bundled scenario by name with `path=value` overrides.
pub fn bundled(name: &str, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let text = source(name).ok_or_else(|| ScenarioError::Parse(format!("no bundled scenario named `{name}`")))?;
    Scenario::from_toml_str(text, overrides)
}
