//! Comparison controllers: dq PI (the cascaded PI/PR method without its
//! resonant branch), super-twisting and integral terminal sliding mode.
//!
//! None of these structures are given beyond their gain values, so each
//! one is a standard textbook form:
//!
//! * PI, voltage: `u = kp e + ki ∫e`, `e = v* - v_dc`, `u` a fraction of p_v.
//! * PI, current: `u v_dc = v + ω l J i - kp e - ki ∫e`, `e = i* - i`.
//! * STA: `x̃' = -α1 sig(x̃, 1/2) + w`, `w' = -α2 sgn(x̃)`.
//! * ITSMC: `S = x̃ + ζ ∫x̃ + µ ∫sig(x̃, a)`, `x̃' = -ζ x̃ - µ sig(x̃, a) - σ sig(S, q/p)`,
//!   with `a = p1/q1` on the current loop and `a = q/p` on the voltage loop.
//!
//! `x̃` is the tracking error (`v_dc - v*` or `i - i*`). The engine maps a
//! commanded error rate to plant inputs through the same model terms as
//! the proposed controller, and the voltage-loop STA and ITSMC add the ESO
//! disturbance estimate.

use serde::{Deserialize, Serialize};

use crate::math::{sgn, sig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Proposed,
    PiPr,
    AdaptiveSta,
    Itsmc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::PiPr, Method::AdaptiveSta, Method::Itsmc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::PiPr => "pi_pr",
            Method::AdaptiveSta => "adaptive_sta",
            Method::Itsmc => "itsmc",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown controller `{s}` (expected proposed, pi_pr, adaptive_sta or itsmc)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaGains {
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItsmcGains {
    pub zeta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub p: u32,
    pub q: u32,
    /// exponent pair of the surface integral; `None` falls back to q/p
    #[serde(default)]
    pub p1: Option<u32>,
    #[serde(default)]
    pub q1: Option<u32>,
}

impl ItsmcGains {
    /// Exponent of the fractional term inside the surface integral.
    pub fn frac_exponent(&self) -> f64 {
        match (self.p1, self.q1) {
            (Some(p1), Some(q1)) => p1 as f64 / q1 as f64,
            _ => self.q as f64 / self.p as f64,
        }
    }

    pub fn reaching_exponent(&self) -> f64 {
        self.q as f64 / self.p as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineGains {
    pub pi_voltage: PiGains,
    pub pi_current: PiGains,
    pub sta_voltage: StaGains,
    pub sta_current: StaGains,
    pub itsmc_voltage: ItsmcGains,
    pub itsmc_current: ItsmcGains,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self {
            pi_voltage: PiGains { kp: 0.01, ki: 1.0 },
            pi_current: PiGains { kp: 0.01, ki: 1.0 },
            sta_voltage: StaGains { alpha1: 20.0, alpha2: 4.0 },
            sta_current: StaGains { alpha1: 30.0, alpha2: 2.0 },
            itsmc_voltage: ItsmcGains {
                zeta: 1.0,
                mu: 1.0,
                sigma: 0.5,
                p: 5,
                q: 3,
                p1: None,
                q1: None,
            },
            itsmc_current: ItsmcGains {
                zeta: 1.0,
                mu: 1.0,
                sigma: 0.5,
                p: 5,
                q: 3,
                p1: Some(1),
                q1: Some(2),
            },
        }
    }
}

impl BaselineGains {
    /// First non-positive gain as (path, message).
    pub fn check(&self) -> Result<(), (String, String)> {
        let mut vals: Vec<(String, f64)> = vec![
            ("pi_voltage.kp".into(), self.pi_voltage.kp),
            ("pi_voltage.ki".into(), self.pi_voltage.ki),
            ("pi_current.kp".into(), self.pi_current.kp),
            ("pi_current.ki".into(), self.pi_current.ki),
            ("sta_voltage.alpha1".into(), self.sta_voltage.alpha1),
            ("sta_voltage.alpha2".into(), self.sta_voltage.alpha2),
            ("sta_current.alpha1".into(), self.sta_current.alpha1),
            ("sta_current.alpha2".into(), self.sta_current.alpha2),
        ];
        for (name, g) in [("itsmc_voltage", &self.itsmc_voltage), ("itsmc_current", &self.itsmc_current)] {
            vals.push((format!("{name}.zeta"), g.zeta));
            vals.push((format!("{name}.mu"), g.mu));
            vals.push((format!("{name}.sigma"), g.sigma));
            vals.push((format!("{name}.p"), g.p as f64));
            vals.push((format!("{name}.q"), g.q as f64));
            if let Some(p1) = g.p1 {
                vals.push((format!("{name}.p1"), p1 as f64));
            }
            if let Some(q1) = g.q1 {
                vals.push((format!("{name}.q1"), q1 as f64));
            }
        }
        for (name, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// PI output `kp e + ki ∫e`.
pub fn pi_output(e: f64, integral: f64, g: &PiGains) -> f64 {
    g.kp * e + g.ki * integral
}

/// Advances the PI integrator; `hold` freezes it (anti-windup).
pub fn pi_pr_step(e: f64, integral: f64, g: &PiGains, dt: f64, hold: bool) -> (f64, f64) {
    let next = if hold { integral } else { integral + e * dt };
    (pi_output(e, next, g), next)
}

/// STA output `-α1 sig(s, 1/2) + w`.
pub fn sta_output(s: f64, w: f64, g: &StaGains) -> f64 {
    -g.alpha1 * sig(s, 0.5) + w
}

/// dw/dt of the STA integral term.
pub fn sta_rate(s: f64, g: &StaGains) -> f64 {
    -g.alpha2 * sgn(s)
}

/// One explicit step of the STA: returns (output, next w).
pub fn sta_step(s: f64, w: f64, g: &StaGains, dt: f64) -> (f64, f64) {
    (sta_output(s, w, g), w + sta_rate(s, g) * dt)
}

/// ITSMC surface from the error and its two integrals.
pub fn itsmc_surface(e: f64, int_e: f64, int_frac: f64, g: &ItsmcGains) -> f64 {
    e + g.zeta * int_e + g.mu * int_frac
}

/// Integrand of the fractional surface integral.
pub fn itsmc_frac(e: f64, g: &ItsmcGains) -> f64 {
    sig(e, g.frac_exponent())
}

/// Commanded error rate giving `S' = -σ sig(S, q/p)`.
pub fn itsmc_output(e: f64, s: f64, g: &ItsmcGains) -> f64 {
    -g.zeta * e - g.mu * itsmc_frac(e, g) - g.sigma * sig(s, g.reaching_exponent())
}

/// One explicit step: returns (output, next ∫e, next ∫sig).
pub fn itsmc_step(e: f64, int_e: f64, int_frac: f64, g: &ItsmcGains, dt: f64) -> (f64, f64, f64) {
    let s = itsmc_surface(e, int_e, int_frac, g);
    (itsmc_output(e, s, g), int_e + e * dt, int_frac + itsmc_frac(e, g) * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_match_nominal_gains() {
        let g = BaselineGains::default();
        assert_eq!((g.pi_current.kp, g.pi_current.ki), (0.01, 1.0));
        assert_eq!((g.pi_voltage.kp, g.pi_voltage.ki), (0.01, 1.0));
        assert_eq!((g.sta_current.alpha1, g.sta_current.alpha2), (30.0, 2.0));
        assert_eq!((g.sta_voltage.alpha1, g.sta_voltage.alpha2), (20.0, 4.0));
        let c = g.itsmc_current;
        assert_eq!((c.zeta, c.mu, c.sigma, c.p, c.q, c.p1, c.q1), (1.0, 1.0, 0.5, 5, 3, Some(1), Some(2)));
        let v = g.itsmc_voltage;
        assert_eq!((v.zeta, v.mu, v.sigma, v.p, v.q), (1.0, 1.0, 0.5, 5, 3));
        assert!(g.check().is_ok());
    }

    #[test]
    fn pi_examples() {
        let g = PiGains { kp: 0.01, ki: 1.0 };
        assert_eq!(pi_pr_step(0.0, 0.0, &g, 1e-3, false), (0.0, 0.0));
        // constant error: kp e + ki e t
        let e = 2.0;
        let dt = 1e-3;
        let mut integral = 0.0;
        let mut out = 0.0;
        for _ in 0..1000 {
            let r = pi_pr_step(e, integral, &g, dt, false);
            out = r.0;
            integral = r.1;
        }
        assert_relative_eq!(out, 0.01 * e + e * 1.0, epsilon = 1e-9);
        assert_eq!(pi_pr_step(e, 0.3, &g, dt, true).1, 0.3);
    }

    #[test]
    fn sta_examples() {
        let g = StaGains { alpha1: 30.0, alpha2: 2.0 };
        assert_eq!(sta_step(0.0, 0.0, &g, 1e-3).0, 0.0);
        assert_eq!(sta_output(1.0, 0.0, &g), -30.0);
        assert_eq!(sta_step(1.0, 0.0, &g, 1e-3).1, -2e-3);
    }

    #[test]
    fn itsmc_zero_state() {
        let g = BaselineGains::default().itsmc_current;
        assert_eq!(itsmc_step(0.0, 0.0, 0.0, &g, 1e-3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn itsmc_matches_direct_reimplementation() {
        // scalar plant x' = v driven by the ITSMC, against a hand-written loop
        let g = BaselineGains::default().itsmc_current;
        let dt = 1e-4;
        let (mut x, mut i1, mut i2) = (1.0f64, 0.0f64, 0.0f64);
        let (mut y, mut j1, mut j2) = (1.0f64, 0.0f64, 0.0f64);
        for _ in 0..50_000 {
            let (v, n1, n2) = itsmc_step(x, i1, i2, &g, dt);
            x += v * dt;
            i1 = n1;
            i2 = n2;

            let s = y + j1 + j2;
            let rate = -y - y.signum() * y.abs().sqrt() - 0.5 * s.signum() * s.abs().powf(0.6);
            j1 += y * dt;
            j2 += y.signum() * y.abs().sqrt() * dt;
            y += rate * dt;
        }
        assert_relative_eq!(x, y, epsilon = 1e-12);
        assert!(x.abs() < 1e-3);
    }

    #[test]
    fn method_parse() {
        assert_eq!("itsmc".parse::<Method>().unwrap(), Method::Itsmc);
        assert!("pid".parse::<Method>().is_err());
    }
}
