//! Finite-time sliding-mode control of a three-phase AC-DC rectifier in the
//! dq frame: plant model, cascaded voltage and current controllers,
//! disturbance estimators, comparison controllers and a fixed-step
//! simulation engine.

pub mod baselines;
pub mod currctl;
pub mod error;
pub mod estimator;
pub mod math;
pub mod plant;
pub mod scenarios;
pub mod simcore;
pub mod voltctl;

pub use baselines::Method;
pub use error::{ControlError, PlantError, ScenarioError, SimError};
pub use simcore::{run_scenario, run_scenario_log, Metrics, RunLog, Scenario};
