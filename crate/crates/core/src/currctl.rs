//! Inner current loop: integral terminal sliding manifold with a saturated
//! reaching law, plus the terminal-time and reaching-time figures.
//!
//! Surface per axis: `s = ĩ + β ∫ fpow(ĩ, q, p)` with `ĩ = i - i*`.

use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::math::{fpow, sat};
use crate::plant::PlantParams;
use crate::voltctl::check_exponents;

/// How the voltage-loop output maps to a d-axis current reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefInterpretation {
    /// `i_d* = u p_v / v_d`: the output is a commanded power.
    #[default]
    Power,
    /// `i_d* = u / v_d` as printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurrentGains {
    pub p: u32,
    pub q: u32,
    pub beta: f64,
    /// grid disturbance bound δ (V)
    pub delta: f64,
    pub eta: f64,
    /// boundary-layer width ε (A)
    pub eps_bl: f64,
    pub ref_interpretation: RefInterpretation,
}

impl Default for CurrentGains {
    fn default() -> Self {
        Self {
            p: 5,
            q: 3,
            beta: 0.5,
            delta: 2.0,
            eta: 1.0,
            eps_bl: 1.0,
            ref_interpretation: RefInterpretation::Power,
        }
    }
}

impl CurrentGains {
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        check_exponents(self.p, self.q)?;
        for (name, v) in [("beta", self.beta), ("eta", self.eta), ("eps_bl", self.eps_bl)] {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(("delta", format!("must be finite and >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CurrentLoopState {
    pub i_ref: [f64; 2],
    /// backward-difference derivative of the reference (A/s)
    pub di_ref: [f64; 2],
    pub i_tilde: [f64; 2],
    pub integral_acc: [f64; 2],
    pub s: [f64; 2],
}

impl CurrentLoopState {
    pub fn new(i: [f64; 2], i_ref: [f64; 2], di_ref: [f64; 2], integral_acc: [f64; 2], beta: f64) -> Self {
        let i_tilde = [i[0] - i_ref[0], i[1] - i_ref[1]];
        Self {
            i_ref,
            di_ref,
            i_tilde,
            integral_acc,
            s: current_surface(i_tilde, integral_acc, beta),
        }
    }
}

/// dq current references from the voltage-loop output.
pub fn current_refs(u_voltage: f64, v_d: f64, interp: RefInterpretation, p_v: f64) -> Result<[f64; 2], ControlError> {
    if v_d == 0.0 {
        return Err(ControlError::ZeroGridVoltage);
    }
    let i_d = match interp {
        RefInterpretation::Power => u_voltage * p_v / v_d,
        RefInterpretation::Literal => u_voltage / v_d,
    };
    Ok([i_d, 0.0])
}

/// Known term `ψ = -r i0 + ω l J i0 + v - l di0`.
pub fn psi_term(i0: [f64; 2], di0: [f64; 2], v: [f64; 2], params: &PlantParams) -> [f64; 2] {
    let wl = params.omega_g() * params.l;
    [
        -params.r * i0[0] + wl * i0[1] + v[0] - params.l * di0[0],
        -params.r * i0[1] - wl * i0[0] + v[1] - params.l * di0[1],
    ]
}

pub fn current_surface(i_tilde: [f64; 2], integral_acc: [f64; 2], beta: f64) -> [f64; 2] {
    [i_tilde[0] + beta * integral_acc[0], i_tilde[1] + beta * integral_acc[1]]
}

/// Integrand of the surface accumulator, `fpow(ĩ, q, p)` per axis.
pub fn surface_integrand(i_tilde: [f64; 2], gains: &CurrentGains) -> [f64; 2] {
    let (q, p) = (gains.q as i32, gains.p);
    [fpow(i_tilde[0], q, p), fpow(i_tilde[1], q, p)]
}

/// Time for one axis to reach zero while on the surface.
pub fn terminal_time(i_tilde0: f64, beta: f64, p: u32, q: u32) -> f64 {
    let (p, q) = (p as f64, q as f64);
    p / (beta * (p - q)) * i_tilde0.abs().powf(1.0 - q / p)
}

pub fn sat_vec(s: &[f64], eps_bl: f64) -> Vec<f64> {
    s.iter().map(|x| sat(x / eps_bl)).collect()
}

/// `sᵀ sat(s / ε)`.
pub fn sat_inner(s: &[f64], eps_bl: f64) -> f64 {
    s.iter().map(|x| x * sat(x / eps_bl)).sum()
}

/// `Σ min(s_i² / ε, |s_i|)`, equal to [`sat_inner`].
pub fn sat_inner_closed_form(s: &[f64], eps_bl: f64) -> f64 {
    s.iter().map(|x| (x * x / eps_bl).min(x.abs())).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CurrentCommand {
    pub u: [f64; 2],
    pub u_raw: [f64; 2],
    pub clamped: [bool; 2],
}

impl CurrentCommand {
    pub fn from_raw(u_raw: [f64; 2]) -> Self {
        let u = [u_raw[0].clamp(-1.0, 1.0), u_raw[1].clamp(-1.0, 1.0)];
        Self {
            u,
            u_raw,
            clamped: [u[0] != u_raw[0], u[1] != u_raw[1]],
        }
    }
}

/// Current control law; components clamped to `[-1, 1]`.
pub fn current_control(
    lp: &CurrentLoopState,
    v: [f64; 2],
    v_dc: f64,
    gains: &CurrentGains,
    params: &PlantParams,
) -> Result<CurrentCommand, ControlError> {
    if v_dc.is_nan() || v_dc <= 0.0 {
        return Err(ControlError::NonPositiveVdc(v_dc));
    }
    let e = lp.i_tilde;
    let wl = params.omega_g() * params.l;
    let psi = psi_term(lp.i_ref, lp.di_ref, v, params);
    let f = surface_integrand(e, gains);
    let k = gains.delta + gains.eta;
    let raw = [
        (-params.r * e[0] + wl * e[1] + psi[0] + params.l * gains.beta * f[0] + k * sat(lp.s[0] / gains.eps_bl)) / v_dc,
        (-params.r * e[1] - wl * e[0] + psi[1] + params.l * gains.beta * f[1] + k * sat(lp.s[1] / gains.eps_bl)) / v_dc,
    ];
    if !(raw[0].is_finite() && raw[1].is_finite()) {
        return Err(ControlError::NonFinite("current_control output"));
    }
    Ok(CurrentCommand::from_raw(raw))
}

/// Reaching-time bound `l ‖s(0)‖ / (η √n)` with n = 2.
pub fn current_reaching_bound(s0_norm: f64, gains: &CurrentGains, params: &PlantParams) -> f64 {
    params.l * s0_norm / (gains.eta * 2f64.sqrt())
}

/// Endpoint `l ε / η` of the displayed reaching interval.
pub fn current_reaching_interval(gains: &CurrentGains, params: &PlantParams) -> f64 {
    params.l * gains.eps_bl / gains.eta
}

/// Radius below which `V̇ ≤ -η √n ‖s‖` no longer holds inside the layer:
/// `η √n ε / (δ + η)`.
pub fn boundary_layer_floor(gains: &CurrentGains) -> f64 {
    gains.eta * 2f64.sqrt() * gains.eps_bl / (gains.delta + gains.eta)
}
