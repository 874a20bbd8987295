//! Averaged dq model of the three-phase rectifier, frame transforms and
//! the load / grid profiles that drive a run.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::PlantError;

const TWO_PI_3: f64 = 2.0 * PI / 3.0;

/// Rectifier constants. Defaults are the nominal 400 V / 60 Hz set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// line inductance (H)
    pub l: f64,
    /// line resistance (Ω)
    pub r: f64,
    /// DC-link capacitance (F)
    pub c: f64,
    /// grid frequency (Hz)
    pub f_grid: f64,
    /// line-to-line RMS grid voltage (V)
    pub v_ll_rms: f64,
    /// DC-link voltage reference (V)
    pub v_dc_ref: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            l: 0.5e-3,
            r: 0.02,
            c: 3300e-6,
            f_grid: 60.0,
            v_ll_rms: 400.0,
            v_dc_ref: 520.0,
        }
    }
}

impl PlantParams {
    /// Grid angular frequency (rad/s).
    pub fn omega_g(&self) -> f64 {
        2.0 * PI * self.f_grid
    }

    /// d-axis grid voltage for a balanced grid with amplitude-invariant Park.
    pub fn v_d(&self) -> f64 {
        grid_v_d(self.v_ll_rms)
    }

    /// Returns the first violated constraint as (field, message).
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        let fields = [
            ("l", self.l),
            ("r", self.r),
            ("c", self.c),
            ("f_grid", self.f_grid),
            ("v_ll_rms", self.v_ll_rms),
            ("v_dc_ref", self.v_dc_ref),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err((name, "must be finite".into()));
            }
        }
        if self.l <= 0.0 {
            return Err(("l", format!("must be > 0, got {}", self.l)));
        }
        if self.r < 0.0 {
            return Err(("r", format!("must be >= 0, got {}", self.r)));
        }
        if self.c <= 0.0 {
            return Err(("c", format!("must be > 0, got {}", self.c)));
        }
        if self.f_grid <= 0.0 {
            return Err(("f_grid", format!("must be > 0, got {}", self.f_grid)));
        }
        if self.v_ll_rms <= 0.0 {
            return Err(("v_ll_rms", format!("must be > 0, got {}", self.v_ll_rms)));
        }
        if self.v_dc_ref <= 0.0 {
            return Err(("v_dc_ref", format!("must be > 0, got {}", self.v_dc_ref)));
        }
        Ok(())
    }
}

/// `v_d = sqrt(2) * v_ll / sqrt(3)`.
pub fn grid_v_d(v_ll_rms: f64) -> f64 {
    2f64.sqrt() * v_ll_rms / 3f64.sqrt()
}

/// dq currents and DC-link voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub i_d: f64,
    pub i_q: f64,
    pub v_dc: f64,
}

/// Time derivative of the plant state: `(di_d/dt, di_q/dt, dv_dc/dt)`.
///
/// `l di/dt = -r i + w l J i + v - u v_dc`, `c dv_dc/dt = u.i - i_l`,
/// with `J i = (i_q, -i_d)`.
pub fn plant_derivative(
    state: &PlantState,
    u: [f64; 2],
    v_dq: [f64; 2],
    i_l: f64,
    params: &PlantParams,
) -> Result<[f64; 3], PlantError> {
    let inputs = [state.i_d, state.i_q, state.v_dc, u[0], u[1], v_dq[0], v_dq[1], i_l];
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(PlantError::NonFinite("plant_derivative input"));
    }
    if state.v_dc <= 0.0 {
        return Err(PlantError::NonPositiveVdc(state.v_dc));
    }
    Ok(plant_rhs(state, u, v_dq, i_l, params))
}

/// Unchecked right-hand side used inside the integrator.
#[inline]
pub(crate) fn plant_rhs(
    state: &PlantState,
    u: [f64; 2],
    v_dq: [f64; 2],
    i_l: f64,
    p: &PlantParams,
) -> [f64; 3] {
    let wl = p.omega_g() * p.l;
    let did = (-p.r * state.i_d + wl * state.i_q + v_dq[0] - u[0] * state.v_dc) / p.l;
    let diq = (-p.r * state.i_q - wl * state.i_d + v_dq[1] - u[1] * state.v_dc) / p.l;
    let dv = (u[0] * state.i_d + u[1] * state.i_q - i_l) / p.c;
    [did, diq, dv]
}

/// Amplitude-invariant Park transform of a three-phase triple.
pub fn abc_to_dq(abc: [f64; 3], theta: f64) -> [f64; 2] {
    let mut d = 0.0;
    let mut q = 0.0;
    for (k, x) in abc.iter().enumerate() {
        let a = theta - k as f64 * TWO_PI_3;
        d += x * a.cos();
        q -= x * a.sin();
    }
    [2.0 / 3.0 * d, 2.0 / 3.0 * q]
}

/// Inverse of [`abc_to_dq`]; the returned phases sum to zero.
pub fn dq_to_abc(dq: [f64; 2], theta: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let a = theta - k as f64 * TWO_PI_3;
        *o = dq[0] * a.cos() - dq[1] * a.sin();
    }
    out
}

/// Phase-A value of a dq vector at angle `theta`.
#[inline]
pub fn phase_a(dq: [f64; 2], theta: f64) -> f64 {
    dq[0] * theta.cos() - dq[1] * theta.sin()
}

/// Load disturbance ρ(t) in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadProfile {
    /// Resistive load: ρ = v_dc² / R.
    ConstantResistance { resistance: f64 },
    /// Time-ordered `(start_s, watts)` segments; the first starts at 0.
    PiecewiseConstantPower { segments: Vec<(f64, f64)> },
    /// ρ = offset + amplitude·sin(2π f t).
    SinusoidalPower {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
    /// ρ = i_l²·r with a fixed load current and resistance.
    CurrentSquaredResistance { current: f64, resistance: f64 },
}

impl Default for LoadProfile {
    fn default() -> Self {
        LoadProfile::PiecewiseConstantPower {
            segments: vec![(0.0, 0.0)],
        }
    }
}

impl LoadProfile {
    /// Load power at time `t` and DC-link voltage `v_dc`.
    pub fn power(&self, t: f64, v_dc: f64) -> f64 {
        match self {
            LoadProfile::ConstantResistance { resistance } => v_dc * v_dc / resistance,
            LoadProfile::PiecewiseConstantPower { segments } => {
                let mut value = segments.first().map_or(0.0, |s| s.1);
                for &(start, w) in segments {
                    if t >= start {
                        value = w;
                    } else {
                        break;
                    }
                }
                value
            }
            LoadProfile::SinusoidalPower {
                amplitude,
                frequency,
                offset,
            } => offset + amplitude * (2.0 * PI * frequency * t).sin(),
            LoadProfile::CurrentSquaredResistance {
                current,
                resistance,
            } => current * current * resistance,
        }
    }

    /// dρ/dt inside a segment (jumps of piecewise profiles are excluded).
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            LoadProfile::SinusoidalPower {
                amplitude,
                frequency,
                ..
            } => amplitude * 2.0 * PI * frequency * (2.0 * PI * frequency * t).cos(),
            LoadProfile::ConstantResistance { .. }
            | LoadProfile::PiecewiseConstantPower { .. }
            | LoadProfile::CurrentSquaredResistance { .. } => 0.0,
        }
    }

    /// Start times of piecewise segments, empty for smooth profiles.
    pub fn segment_starts(&self) -> Vec<f64> {
        match self {
            LoadProfile::PiecewiseConstantPower { segments } => {
                segments.iter().map(|s| s.0).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn check(&self) -> Result<(), (String, String)> {
        match self {
            LoadProfile::ConstantResistance { resistance } => {
                if !(resistance.is_finite() && *resistance > 0.0) {
                    return Err(("resistance".into(), "must be finite and > 0".into()));
                }
            }
            LoadProfile::PiecewiseConstantPower { segments } => {
                if segments.is_empty() {
                    return Err(("segments".into(), "must not be empty".into()));
                }
                if segments[0].0 != 0.0 {
                    return Err(("segments[0]".into(), "first segment must start at 0".into()));
                }
                for (k, s) in segments.iter().enumerate() {
                    if !(s.0.is_finite() && s.1.is_finite()) {
                        return Err((format!("segments[{k}]"), "must be finite".into()));
                    }
                    if k > 0 && s.0 <= segments[k - 1].0 {
                        return Err((
                            format!("segments[{k}]"),
                            "segment start times must be strictly increasing".into(),
                        ));
                    }
                }
            }
            LoadProfile::SinusoidalPower {
                amplitude,
                frequency,
                offset,
            } => {
                if ![amplitude, frequency, offset].iter().all(|x| x.is_finite()) {
                    return Err(("amplitude".into(), "parameters must be finite".into()));
                }
                if *frequency < 0.0 {
                    return Err(("frequency".into(), "must be >= 0".into()));
                }
            }
            LoadProfile::CurrentSquaredResistance {
                current,
                resistance,
            } => {
                if !(current.is_finite() && resistance.is_finite() && *resistance >= 0.0) {
                    return Err(("resistance".into(), "must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Dense-sampling check of |ρ| ≤ δ and |dρ/dt| ≤ ε over `[0, horizon]`,
    /// evaluated at the nominal DC voltage.
    pub fn check_bounds(
        &self,
        horizon: f64,
        v_dc_nominal: f64,
        delta: f64,
        eps_rate: f64,
    ) -> Result<(), String> {
        let n = 20_000usize;
        for k in 0..=n {
            let t = horizon * k as f64 / n as f64;
            let rho = self.power(t, v_dc_nominal);
            if rho.abs() > delta {
                return Err(format!(
                    "|rho| = {:.6} W at t = {t:.6} s exceeds delta = {delta}",
                    rho.abs()
                ));
            }
            let rate = self.rate(t);
            if rate.abs() > eps_rate {
                return Err(format!(
                    "|d rho/dt| = {:.6} W/s at t = {t:.6} s exceeds eps_rate = {eps_rate}",
                    rate.abs()
                ));
            }
        }
        Ok(())
    }
}

/// Load power with a horizon check.
pub fn load_disturbance(
    t: f64,
    v_dc: f64,
    profile: &LoadProfile,
    horizon: f64,
) -> Result<f64, PlantError> {
    if !(0.0..=horizon).contains(&t) {
        return Err(PlantError::OutsideHorizon { t, horizon });
    }
    Ok(profile.power(t, v_dc))
}

/// Frequency, amplitude and parameter-perturbation schedule of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridProfile {
    /// Piecewise-linear `(t_s, Hz)` breakpoints; empty means nominal.
    pub frequency: Vec<(f64, f64)>,
    /// Piecewise-constant `(t_s, V_ll_rms)` steps; empty means nominal.
    pub amplitude: Vec<(f64, f64)>,
    /// Multiplier on the plant inductance (controller keeps the nominal value).
    pub l_factor: f64,
    /// Multiplier on the plant resistance.
    pub r_factor: f64,
}

impl Default for GridProfile {
    fn default() -> Self {
        Self {
            frequency: Vec::new(),
            amplitude: Vec::new(),
            l_factor: 1.0,
            r_factor: 1.0,
        }
    }
}

impl GridProfile {
    pub fn frequency_at(&self, t: f64, nominal: f64) -> f64 {
        let f = &self.frequency;
        match f.len() {
            0 => nominal,
            _ if t <= f[0].0 => f[0].1,
            _ => {
                for w in f.windows(2) {
                    let (t0, f0) = w[0];
                    let (t1, f1) = w[1];
                    if t <= t1 {
                        return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
                    }
                }
                f[f.len() - 1].1
            }
        }
    }

    pub fn amplitude_at(&self, t: f64, nominal: f64) -> f64 {
        let mut v = nominal;
        for &(start, a) in &self.amplitude {
            if t >= start {
                v = a;
            } else {
                break;
            }
        }
        v
    }

    pub fn check(&self) -> Result<(), (String, String)> {
        for (name, sched) in [("frequency", &self.frequency), ("amplitude", &self.amplitude)] {
            for (k, &(t, v)) in sched.iter().enumerate() {
                if !(t.is_finite() && v.is_finite() && v > 0.0) {
                    return Err((format!("{name}[{k}]"), "must be finite with value > 0".into()));
                }
                if k > 0 && t <= sched[k - 1].0 {
                    return Err((
                        format!("{name}[{k}]"),
                        "breakpoint times must be strictly increasing".into(),
                    ));
                }
            }
        }
        for (name, v) in [("l_factor", self.l_factor), ("r_factor", self.r_factor)] {
            if !(0.5..=1.5).contains(&v) {
                return Err((name.into(), format!("must lie in [0.5, 1.5], got {v}")));
            }
        }
        Ok(())
    }
}
