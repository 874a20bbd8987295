//! Outer voltage loop: energy-error coordinates, terminal sliding surface,
//! control law and the analytic finite-time figures.
//!
//! The loop works on `z = v_dc^2 / 2`. With `z2 = z* - z` and `z1' = z2`
//! the surface is `s = k1 * fpow(z2, p, q) + z1`.

use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::math::{fpow, sat, sgn};
use crate::plant::PlantParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LawVariant {
    /// The law exactly as printed, with the unscaled ρ̂ and u_in terms.
    Literal,
    /// Closed form whose substitution gives the intended closed loop.
    #[default]
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoltageGains {
    pub p: u32,
    pub q: u32,
    pub k1: f64,
    pub gamma: f64,
    /// disturbance magnitude bound δ (W)
    pub delta: f64,
    pub eta: f64,
    /// derivative filter gain σ (1/s)
    pub sigma: f64,
    /// disturbance rate bound ε (W/s)
    pub eps_rate: f64,
    pub law_variant: LawVariant,
    /// Width of the optional boundary layer on the surface; 0 keeps `sgn`.
    pub boundary_layer: f64,
    /// Power base p_v (W): the control output is a fraction of it.
    pub p_v_base: f64,
}

impl Default for VoltageGains {
    fn default() -> Self {
        Self {
            p: 5,
            q: 3,
            k1: 1.0,
            gamma: 0.5,
            delta: 2.0,
            eta: 1.0,
            sigma: 1.0e4,
            eps_rate: 1.0,
            law_variant: LawVariant::Consistent,
            boundary_layer: 0.0,
            p_v_base: 10_000.0,
        }
    }
}

/// Checks shared by both loops: odd p, q with 1 < p/q < 2.
pub(crate) fn check_exponents(p: u32, q: u32) -> Result<(), (&'static str, String)> {
    if p.is_multiple_of(2) {
        return Err(("p", format!("must be an odd positive integer, got {p}")));
    }
    if q.is_multiple_of(2) {
        return Err(("q", format!("must be an odd positive integer, got {q}")));
    }
    if !(p > q && p < 2 * q) {
        return Err(("p", format!("p/q = {p}/{q} must lie in (1, 2)")));
    }
    Ok(())
}

impl VoltageGains {
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        check_exponents(self.p, self.q)?;
        let positive = [
            ("k1", self.k1),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("sigma", self.sigma),
            ("p_v_base", self.p_v_base),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("delta", self.delta),
            ("eps_rate", self.eps_rate),
            ("boundary_layer", self.boundary_layer),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err((name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `k1 p / (c q)`, the factor linking ρ̃ to ds/dt.
    pub fn surface_scale(&self, c: f64) -> f64 {
        self.k1 * self.p as f64 / (c * self.q as f64)
    }

    /// Switching function: `sgn(s)`, or `sat(s / w)` with a boundary layer.
    pub fn switching(&self, s: f64) -> f64 {
        if self.boundary_layer > 0.0 {
            sat(s / self.boundary_layer)
        } else {
            sgn(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VoltageLoopState {
    pub z_tilde1: f64,
    pub z_tilde2: f64,
    pub s: f64,
    /// power base the control output is scaled by (W)
    pub p_v: f64,
}

impl VoltageLoopState {
    pub fn new(z_tilde1: f64, v_dc: f64, v_ref: f64, gains: &VoltageGains) -> Self {
        let z_tilde2 = z_error(v_dc, v_ref);
        Self {
            z_tilde1,
            z_tilde2,
            s: voltage_surface(z_tilde1, z_tilde2, gains),
            p_v: gains.p_v_base,
        }
    }
}

/// `z* - z` with `z = v^2 / 2`.
#[inline]
pub fn z_error(v_dc: f64, v_ref: f64) -> f64 {
    0.5 * (v_ref * v_ref - v_dc * v_dc)
}

pub fn voltage_surface(z_tilde1: f64, z_tilde2: f64, gains: &VoltageGains) -> f64 {
    gains.k1 * fpow(z_tilde2, gains.p as i32, gains.q) + z_tilde1
}

/// Time to reach the origin once on the surface, starting from `z_tilde1`.
pub fn sliding_phase_time(z_tilde1_at_t0: f64, gains: &VoltageGains) -> f64 {
    let (p, q) = (gains.p as f64, gains.q as f64);
    gains.k1.powf(q / p) * p / (p - q) * z_tilde1_at_t0.abs().powf(1.0 - q / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    #[default]
    None,
    Lower,
    Upper,
}

impl Clamp {
    pub fn code(self) -> i8 {
        match self {
            Clamp::None => 0,
            Clamp::Lower => -1,
            Clamp::Upper => 1,
        }
    }

    /// True when a rate of sign `rate` would push further into the clamp.
    pub fn blocks(self, rate: f64) -> bool {
        matches!((self, rate > 0.0, rate < 0.0), (Clamp::Upper, true, _) | (Clamp::Lower, _, true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VoltageCommand {
    /// clamped control, fraction of `p_v`
    pub u: f64,
    /// control before clamping
    pub u_raw: f64,
    pub clamp: Clamp,
}

impl VoltageCommand {
    pub fn from_raw(u_raw: f64) -> Self {
        let (u, clamp) = if u_raw > 1.0 {
            (1.0, Clamp::Upper)
        } else if u_raw <= 0.0 {
            (0.0, Clamp::Lower)
        } else {
            (u_raw, Clamp::None)
        };
        Self { u, u_raw, clamp }
    }
}

/// Part of the raw control that does not depend on ρ̂, plus the factor ρ̂ enters with.
fn law_parts(lp: &VoltageLoopState, gains: &VoltageGains, params: &PlantParams) -> (f64, f64) {
    let (p, q) = (gains.p as i32, gains.q);
    let k = params.c * q as f64 / (gains.k1 * p as f64);
    let sw = (gains.delta + gains.eta) * gains.switching(lp.s);
    let z = fpow(lp.z_tilde2, 2 * q as i32 - p, q);
    match gains.law_variant {
        LawVariant::Consistent => ((k * z + sw) / lp.p_v, 1.0 / lp.p_v),
        LawVariant::Literal => {
            let u_in = (fpow(lp.z_tilde2, p - q as i32, q) - 1.0) * sw;
            (k / lp.p_v * (z + sw) + u_in, 1.0)
        }
    }
}

/// Voltage control law; the output is clamped to `[0, 1]`.
pub fn voltage_control(
    lp: &VoltageLoopState,
    rho_hat: f64,
    gains: &VoltageGains,
    params: &PlantParams,
) -> Result<VoltageCommand, ControlError> {
    if lp.p_v == 0.0 {
        return Err(ControlError::ZeroPowerBase);
    }
    if !(lp.z_tilde1.is_finite() && lp.z_tilde2.is_finite() && rho_hat.is_finite()) {
        return Err(ControlError::NonFinite("voltage_control input"));
    }
    let (base, scale) = law_parts(lp, gains, params);
    Ok(VoltageCommand::from_raw(base + scale * rho_hat))
}

/// Interval of ρ̂ values for which the law stays inside `[0, 1]`.
pub fn rho_hat_window(lp: &VoltageLoopState, gains: &VoltageGains, params: &PlantParams) -> (f64, f64) {
    let (base, scale) = law_parts(lp, gains, params);
    ((0.0 - base) / scale, (1.0 - base) / scale)
}

/// Reaching-time bound for the surface given `s(0)` and `ρ̃(0)`.
pub fn reaching_time_bound(s0: f64, rho_tilde0: f64, gains: &VoltageGains) -> f64 {
    let g = gains.gamma;
    let num = g.max(1.0);
    let den = 2f64.sqrt() * (g * (gains.delta + gains.eta)).min(1.0) * g.sqrt().min(1.0);
    num / den * s0.hypot(rho_tilde0)
}

/// `V = s^2 / 2 + ρ̃^2 / (2γ)`.
pub fn lyapunov(s: f64, rho_tilde: f64, gamma: f64) -> f64 {
    0.5 * s * s + rho_tilde * rho_tilde / (2.0 * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g() -> VoltageGains {
        VoltageGains::default()
    }

    #[test]
    fn defaults_match_nominal_gains() {
        let g = g();
        assert_eq!((g.p, g.q), (5, 3));
        assert_eq!((g.gamma, g.k1, g.delta, g.eta, g.eps_rate), (0.5, 1.0, 2.0, 1.0, 1.0));
        assert_eq!(g.law_variant, LawVariant::Consistent);
        assert!(g.check().is_ok());
    }

    #[test]
    fn rejects_bad_gains() {
        let mut b = g();
        b.p = 7;
        assert!(b.check().is_err());
        let mut b = g();
        b.gamma = 0.0;
        assert_eq!(b.check().unwrap_err().0, "gamma");
        let mut b = g();
        b.q = 4;
        assert!(b.check().is_err());
    }

    #[test]
    fn surface_examples() {
        assert_eq!(voltage_surface(0.0, 0.0, &g()), 0.0);
        assert_relative_eq!(voltage_surface(2.0, 1.0, &g()), 3.0);
        assert_relative_eq!(voltage_surface(1.0, -1.0, &g()), 0.0);
    }

    #[test]
    fn sliding_phase_examples() {
        assert_eq!(sliding_phase_time(0.0, &g()), 0.0);
        assert_relative_eq!(sliding_phase_time(1.0, &g()), 2.5, epsilon = 1e-12);
        assert_relative_eq!(sliding_phase_time(32.0, &g()), 10.0, epsilon = 1e-12);
        assert_relative_eq!(sliding_phase_time(-32.0, &g()), 10.0, epsilon = 1e-12);
    }

    fn loop_state(z2: f64, s: f64, p_v: f64) -> VoltageLoopState {
        VoltageLoopState {
            z_tilde1: 0.0,
            z_tilde2: z2,
            s,
            p_v,
        }
    }

    #[test]
    fn control_examples() {
        let params = PlantParams::default();
        let gains = g();
        let zero = voltage_control(&loop_state(0.0, 0.0, 1000.0), 0.0, &gains, &params).unwrap();
        assert_eq!(zero.u, 0.0);
        assert_eq!(zero.clamp, Clamp::Lower);

        let cons = voltage_control(&loop_state(1.0, 0.5, 1000.0), 0.0, &gains, &params).unwrap();
        assert_relative_eq!(cons.u, (0.00198 + 3.0) / 1000.0, epsilon = 1e-15);
        assert_relative_eq!(cons.u, 3.00198e-3, epsilon = 1e-12);

        let lit = VoltageGains {
            law_variant: LawVariant::Literal,
            ..gains
        };
        let l = voltage_control(&loop_state(1.0, 0.5, 1000.0), 0.0, &lit, &params).unwrap();
        assert_relative_eq!(l.u, 7.92e-6, epsilon = 1e-15);
    }

    #[test]
    fn control_rejects_zero_power_base() {
        let r = voltage_control(&loop_state(1.0, 1.0, 0.0), 0.0, &g(), &PlantParams::default());
        assert_eq!(r, Err(ControlError::ZeroPowerBase));
    }

    #[test]
    fn control_clamps_upper() {
        let c = voltage_control(&loop_state(1e6, 1e9, 1000.0), 5000.0, &g(), &PlantParams::default())
            .unwrap();
        assert_eq!(c.u, 1.0);
        assert_eq!(c.clamp, Clamp::Upper);
        assert!(c.u_raw > 1.0);
    }

    #[test]
    fn window_brackets_the_clamp() {
        let params = PlantParams::default();
        for variant in [LawVariant::Consistent, LawVariant::Literal] {
            let gains = VoltageGains {
                law_variant: variant,
                ..g()
            };
            let lp = loop_state(37.0, -4.0, 1000.0);
            let (lo, hi) = rho_hat_window(&lp, &gains, &params);
            let at_lo = voltage_control(&lp, lo, &gains, &params).unwrap();
            let at_hi = voltage_control(&lp, hi, &gains, &params).unwrap();
            assert!(at_lo.u_raw.abs() < 1e-9);
            assert!((at_hi.u_raw - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reaching_bound_examples() {
        assert_eq!(reaching_time_bound(0.0, 0.0, &g()), 0.0);
        let g1 = VoltageGains {
            gamma: 1.0,
            ..g()
        };
        assert_relative_eq!(reaching_time_bound(1.0, 0.0, &g1), 0.7071067811865475, epsilon = 1e-12);
        assert_relative_eq!(reaching_time_bound(3.0, 4.0, &g()), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn clamp_blocks_outward_rates() {
        assert!(Clamp::Upper.blocks(1.0));
        assert!(!Clamp::Upper.blocks(-1.0));
        assert!(Clamp::Lower.blocks(-1.0));
        assert!(!Clamp::None.blocks(1.0));
    }
}
