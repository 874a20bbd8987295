//! Derivative filter for ż, the adaptive disturbance law, and a linear
//! extended state observer used as the comparison estimator.

use serde::{Deserialize, Serialize};

use crate::math::{fpow, sgn};
use crate::plant::PlantParams;
use crate::voltctl::{Clamp, VoltageGains};

/// Sign convention of the disturbance-error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoTildeForm {
    /// `u p_v - c y - ρ̂`, which approximates `ρ - ρ̂`.
    #[default]
    Corrected,
    /// `c y - u p_v + ρ̂` as printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub rho_tilde_form: RhoTildeForm,
    /// initial disturbance estimate (W)
    pub rho_hat0: f64,
    /// ESO bandwidth ω_o (rad/s)
    pub eso_bandwidth: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rho_tilde_form: RhoTildeForm::Corrected,
            rho_hat0: 0.0,
            eso_bandwidth: 500.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EstimatorState {
    pub eta_f: f64,
    pub y: f64,
    pub rho_hat: f64,
}

impl EstimatorState {
    /// Starts the filter with `y(0) = 0`.
    pub fn new(z0: f64, sigma: f64, rho_hat0: f64) -> Self {
        Self {
            eta_f: -sigma * z0,
            y: 0.0,
            rho_hat: rho_hat0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EsoState {
    pub z1_hat: f64,
    pub z2_hat: f64,
    pub bandwidth: f64,
}

impl EsoState {
    pub fn new(z0: f64, bandwidth: f64) -> Self {
        Self {
            z1_hat: z0,
            z2_hat: 0.0,
            bandwidth,
        }
    }

    /// Disturbance estimate in watts.
    pub fn estimate(&self, c: f64) -> f64 {
        -c * self.z2_hat
    }
}

/// One filter step with `z` varying linearly from `z[0]` to `z[1]`.
///
/// With `η' = -σ η - σ² z` and `y = η + σ z`, a linear `z` of slope `m`
/// gives `y(dt) = m + (y(0) - m) e^{-σ dt}` exactly.
pub fn derivative_filter_step(state: &EstimatorState, z: [f64; 2], sigma: f64, dt: f64) -> Option<EstimatorState> {
    if !(z[0].is_finite() && z[1].is_finite() && sigma > 0.0 && dt > 0.0) {
        return None;
    }
    let m = (z[1] - z[0]) / dt;
    let y0 = state.eta_f + sigma * z[0];
    let y = m + (y0 - m) * (-sigma * dt).exp();
    Some(EstimatorState {
        eta_f: y - sigma * z[1],
        y,
        rho_hat: state.rho_hat,
    })
}

/// Right-hand side of the filter state, `-σ η - σ² z`.
#[inline]
pub fn filter_rate(eta_f: f64, z: f64, sigma: f64) -> f64 {
    -sigma * eta_f - sigma * sigma * z
}

/// Ultimate bound of the filter error for `|z''| ≤ eps_rate`.
pub fn filter_error_bound(eps_rate: f64, sigma: f64) -> f64 {
    eps_rate / sigma
}

pub fn rho_tilde_estimate(y: f64, u: f64, p_v: f64, rho_hat: f64, c: f64, form: RhoTildeForm) -> f64 {
    match form {
        RhoTildeForm::Corrected => u * p_v - c * y - rho_hat,
        RhoTildeForm::Literal => c * y - u * p_v + rho_hat,
    }
}

/// dρ̂/dt of the adaptive law.
pub fn adapt_rate(s: f64, z_tilde2: f64, rho_tilde_est: f64, gains: &VoltageGains, params: &PlantParams) -> f64 {
    let e = fpow(z_tilde2, (gains.p - gains.q) as i32, gains.q);
    gains.gamma * gains.surface_scale(params.c) * s * e + (gains.eps_rate + 1.0) * sgn(rho_tilde_est)
}

/// Forward-Euler step of ρ̂, held when the rate would deepen an active clamp.
#[allow(clippy::too_many_arguments)]
pub fn adapt_rho_step(
    rho_hat: f64,
    s: f64,
    z_tilde2: f64,
    rho_tilde_est: f64,
    gains: &VoltageGains,
    params: &PlantParams,
    clamp: Clamp,
    dt: f64,
) -> f64 {
    let rate = adapt_rate(s, z_tilde2, rho_tilde_est, gains, params);
    if clamp.blocks(rate) {
        rho_hat
    } else {
        rho_hat + rate * dt
    }
}

/// ESO right-hand side for the model `z' = b + d` with known input `b`.
#[inline]
pub fn eso_rate(state: &EsoState, z: f64, input: f64) -> [f64; 2] {
    let w = state.bandwidth;
    let e = z - state.z1_hat;
    [state.z2_hat + input + 2.0 * w * e, w * w * e]
}

/// RK4 step of the observer with `z` and the input held over the step.
pub fn eso_step(state: &EsoState, z: f64, input: f64, dt: f64) -> EsoState {
    let at = |x: [f64; 2]| EsoState {
        z1_hat: x[0],
        z2_hat: x[1],
        bandwidth: state.bandwidth,
    };
    let x0 = [state.z1_hat, state.z2_hat];
    let x = crate::simcore::rk4(x0, dt, |x| eso_rate(&at(x), z, input));
    at(x)
}
