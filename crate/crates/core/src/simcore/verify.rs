//! Bound and property checks: reaching-time bounds, on-surface terminal
//! times against numeric integration, the derivative-filter error bound,
//! the saturation identity and Lyapunov monotonicity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::currctl::{boundary_layer_floor, current_reaching_bound, current_reaching_interval, sat_inner, sat_inner_closed_form, terminal_time};
use crate::error::SimError;
use crate::estimator::{derivative_filter_step, filter_error_bound, EstimatorState};
use crate::math::fpow;
use crate::scenarios;
use crate::voltctl::{lyapunov, reaching_time_bound, sliding_phase_time, VoltageGains};

use super::runlog::{Col, RunLog};
use super::{rk4, run_scenario_log, Mode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    Required,
    Informational,
}

/// One property: measured value against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub level: Level,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub detail: String,
}

impl Check {
    fn required(name: &str, passed: bool, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            level: Level::Required,
            passed,
            measured,
            bound,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn required_passed(&self) -> bool {
        self.checks.iter().all(|c| c.level != Level::Required || c.passed)
    }
}

/// First sample time with `|x| < tol`.
pub fn first_hit(t: &[f64], x: &[f64], tol: f64) -> Option<f64> {
    t.iter().zip(x).find(|(_, v)| v.abs() < tol).map(|(t, _)| *t)
}

/// Tolerance on |s_v| that counts as having reached the surface: 0.1 % of
/// |s(0)|, and no less than the boundary-layer width.
pub fn surface_tol(s0: f64, gains: &VoltageGains) -> f64 {
    (1e-3 * s0.abs()).max(gains.boundary_layer)
}

// ------------------------------------------------------- voltage reaching

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachingTrial {
    pub s0: f64,
    pub rho_tilde0: f64,
    pub measured: Option<f64>,
    pub bound: f64,
}

impl ReachingTrial {
    pub fn ok(&self) -> bool {
        self.measured.is_some_and(|m| m <= self.bound)
    }
}

/// Reaching time of the voltage surface from a run log.
pub fn voltage_reaching(log: &RunLog, gains: &VoltageGains) -> ReachingTrial {
    let s = log.col(Col::SV);
    let s0 = s[0];
    let rho_tilde0 = log.col(Col::Rho)[0] - log.col(Col::RhoHat)[0];
    ReachingTrial {
        s0,
        rho_tilde0,
        measured: first_hit(log.t(), s, surface_tol(s0, gains)),
        bound: reaching_time_bound(s0, rho_tilde0, gains),
    }
}

/// Randomized voltage-loop initializations on the `verify` scenario.
pub fn voltage_reaching_trials(seed: u64, n: usize) -> Result<Vec<ReachingTrial>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let setups: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let dv: f64 = rng.gen_range(2.0..20.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let load: f64 = rng.gen_range(100.0..800.0);
            let rho_hat0: f64 = rng.gen_range(0.0..900.0);
            vec![
                format!("initial.v_dc={}", 520.0 + dv),
                format!("load.segments=[[0.0, {load}]]"),
                format!("estimator.rho_hat0={rho_hat0}"),
            ]
        })
        .collect();
    setups
        .par_iter()
        .map(|ov| {
            let sc = scenarios::bundled("verify", ov)?;
            let log = run_scenario_log(&sc)?;
            Ok(voltage_reaching(&log, &sc.voltage))
        })
        .collect()
}

// ------------------------------------------------------- current reaching

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentTrial {
    pub s0_norm: f64,
    pub floor: f64,
    pub measured: Option<f64>,
    /// bound plus two integrator steps
    pub bound: f64,
}

impl CurrentTrial {
    pub fn ok(&self) -> bool {
        self.measured.is_some_and(|m| m <= self.bound)
    }
}

/// First entry of ‖(s_d, s_q)‖ into the boundary-layer floor ball.
pub fn current_reaching(log: &RunLog, sc: &Scenario) -> CurrentTrial {
    let (sd, sq) = (log.col(Col::Sd), log.col(Col::Sq));
    let floor = boundary_layer_floor(&sc.current);
    let s0_norm = sd[0].hypot(sq[0]);
    let measured = log
        .t()
        .iter()
        .enumerate()
        .find(|&(k, _)| sd[k].hypot(sq[k]) <= floor)
        .map(|(_, t)| *t);
    CurrentTrial {
        s0_norm,
        floor,
        measured,
        bound: current_reaching_bound(s0_norm, &sc.current, &sc.plant) + 2.0 * sc.dt,
    }
}

/// Current-reference runs whose initial surface lies in `(floor, ε√2]`.
pub fn current_reaching_trials(seed: u64, n: usize) -> Result<Vec<CurrentTrial>, SimError> {
    let base = scenarios::bundled("current_compare", &[])?;
    let floor = boundary_layer_floor(&base.current);
    let r_max = base.current.eps_bl * 2f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let setups: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let r: f64 = rng.gen_range(floor * 1.05..=r_max);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![
                format!("initial.i_d={}", 1.0 + r * a.cos()),
                format!("initial.i_q={}", r * a.sin()),
                "horizon=0.005".into(),
                "decimation=1".into(),
            ]
        })
        .collect();
    setups
        .par_iter()
        .map(|ov| {
            let sc = scenarios::bundled("current_compare", ov)?;
            let log = run_scenario_log(&sc)?;
            Ok(current_reaching(&log, &sc))
        })
        .collect()
}

// ------------------------------------------------------- terminal times

/// First time `x' = f(x)` from `x0 > 0` reaches zero, by fixed-step RK4.
pub fn numeric_terminal_time(x0: f64, f: impl Fn(f64) -> f64) -> f64 {
    let dt = 1e-5 * x0 / f(x0).abs();
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let next = rk4([x], dt, |y| [f(y[0])])[0];
        if next <= 0.0 {
            // linear interpolation inside the last step
            return t + dt * x / (x - next);
        }
        if next >= x {
            // stages straddle zero and the step stalls: the remainder is under one step
            return t + (x / f(x).abs()).min(dt);
        }
        x = next;
        t += dt;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalCase {
    pub gain: f64,
    pub p: u32,
    pub q: u32,
    pub x0: f64,
    pub analytic: f64,
    pub numeric: f64,
}

impl TerminalCase {
    pub fn rel_err(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.numeric
    }
}

const GRID: [(f64, u32, u32, f64); 10] = [
    (0.5, 5, 3, 1.0),
    (1.0, 5, 3, 1.0),
    (2.0, 5, 3, 0.5),
    (1.0, 7, 5, 2.0),
    (0.8, 7, 5, 1.0),
    (1.5, 9, 5, 1.0),
    (1.0, 9, 7, 0.3),
    (3.0, 11, 7, 1.0),
    (0.3, 5, 3, 4.0),
    (1.0, 11, 9, 1.5),
];

/// Sliding-phase time of the voltage surface over the gain grid.
pub fn sliding_phase_grid() -> Vec<TerminalCase> {
    GRID.iter()
        .map(|&(k1, p, q, x0)| {
            let g = VoltageGains { k1, p, q, ..VoltageGains::default() };
            // on s = 0: z̃1' = z̃2 = -fpow(z̃1 / k1, q, p)
            let numeric = numeric_terminal_time(x0, |x| -fpow(x / k1, q as i32, p));
            TerminalCase {
                gain: k1,
                p,
                q,
                x0,
                analytic: sliding_phase_time(x0, &g),
                numeric,
            }
        })
        .collect()
}

/// Terminal time of the current surface over the gain grid.
pub fn terminal_grid() -> Vec<TerminalCase> {
    GRID.iter()
        .map(|&(beta, p, q, x0)| {
            // on s = 0: ĩ' = -β fpow(ĩ, q, p)
            let numeric = numeric_terminal_time(x0, |x| -beta * fpow(x, q as i32, p));
            TerminalCase {
                gain: beta,
                p,
                q,
                x0,
                analytic: terminal_time(x0, beta, p, q),
                numeric,
            }
        })
        .collect()
}

// ------------------------------------------------------- derivative filter

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterCase {
    pub signal: String,
    pub sigma: f64,
    /// sup |z''| of the signal
    pub eps: f64,
    pub max_err: f64,
    pub bound: f64,
}

impl FilterCase {
    pub fn ok(&self) -> bool {
        self.max_err <= self.bound + 1e-4
    }
}

/// Runs the derivative filter on `z` and returns max |y - z'| after `10/σ`.
pub fn filter_max_error(z: impl Fn(f64) -> f64, dz: impl Fn(f64) -> f64, sigma: f64, horizon: f64, dt: f64) -> f64 {
    let mut st = EstimatorState::new(z(0.0), sigma, 0.0);
    let steps = (horizon / dt).round() as usize;
    let settle = 10.0 / sigma;
    let mut worst = 0.0f64;
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = t0 + dt;
        st = derivative_filter_step(&st, [z(t0), z(t1)], sigma, dt).expect("finite signal");
        if t1 >= settle {
            worst = worst.max((st.y - dz(t1)).abs());
        }
    }
    worst
}

pub fn filter_cases() -> Vec<FilterCase> {
    let w = std::f64::consts::TAU * 5.0;
    let mut out = Vec::new();
    for sigma in [50.0, 100.0, 500.0] {
        let horizon = 10.0 / sigma + 0.4;
        let eps_sin = 3.0 * w * w;
        out.push(FilterCase {
            signal: "3 sin(2π·5 t)".into(),
            sigma,
            eps: eps_sin,
            max_err: filter_max_error(|t| 3.0 * (w * t).sin(), |t| 3.0 * w * (w * t).cos(), sigma, horizon, 1e-6),
            bound: filter_error_bound(eps_sin, sigma),
        });
        out.push(FilterCase {
            signal: "t^2".into(),
            sigma,
            eps: 2.0,
            max_err: filter_max_error(|t| t * t, |t| 2.0 * t, sigma, horizon, 1e-6),
            bound: filter_error_bound(2.0, sigma),
        });
        // z'' = 6t peaks at the end of the window
        let eps_cubic = 6.0 * horizon;
        out.push(FilterCase {
            signal: "t^3".into(),
            sigma,
            eps: eps_cubic,
            max_err: filter_max_error(|t| t * t * t, |t| 3.0 * t * t, sigma, horizon, 1e-6),
            bound: filter_error_bound(eps_cubic, sigma),
        });
    }
    out
}

// ------------------------------------------------------------- saturation

/// Largest deviation between `sᵀsat(s/ε)` and `Σ min(s²/ε, |s|)` over
/// `n` random vectors.
pub fn saturation_identity_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e22);
    let mut worst = 0.0f64;
    let mut s = Vec::with_capacity(8);
    for _ in 0..n {
        let dim = rng.gen_range(1..=8);
        let eps: f64 = rng.gen_range(0.01..3.0);
        s.clear();
        s.extend((0..dim).map(|_| rng.gen_range(-5.0..5.0)));
        let a = sat_inner(&s, eps);
        let b = sat_inner_closed_form(&s, eps);
        worst = worst.max((a - b).abs());
    }
    worst
}

/// The printed lower bound `sᵀsat(s/ε) ≥ ‖s‖` at n = 1, ε = 1, s = 0.5.
pub fn saturation_bound_counterexample() -> (f64, f64) {
    (sat_inner(&[0.5], 1.0), 0.5)
}

// ---------------------------------------------------------------- Lyapunov

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovStats {
    /// sample pairs examined (outside the origin band and unclamped)
    pub checked: usize,
    /// pairs where V increased
    pub increases: usize,
    /// increases larger than the discretization slack
    pub beyond_slack: usize,
    pub worst_excess: f64,
}

impl LyapunovStats {
    pub fn fraction_ok(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            1.0 - self.increases as f64 / self.checked as f64
        }
    }
}

/// `V = s²/2 + ρ̃²/(2γ)` between consecutive samples, with slack
/// `Δs²/2 + Δρ̃²/(2γ)` for the increment over one sample.
pub fn lyapunov_stats(log: &RunLog, gains: &VoltageGains) -> LyapunovStats {
    lyapunov_stats_with(log, gains, lyapunov_tol(log.col(Col::SV)[0], gains))
}

/// Origin band excluded from the monotonicity check: the boundary layer,
/// or a millionth of |s(0)| without one.
pub fn lyapunov_tol(s0: f64, gains: &VoltageGains) -> f64 {
    (1e-6 * s0.abs()).max(gains.boundary_layer)
}

pub fn lyapunov_stats_with(log: &RunLog, gains: &VoltageGains, tol: f64) -> LyapunovStats {
    let gamma = gains.gamma;
    let s = log.col(Col::SV);
    let rho = log.col(Col::Rho);
    let rho_hat = log.col(Col::RhoHat);
    let clamp = log.col(Col::ClampV);
    let mut st = LyapunovStats {
        checked: 0,
        increases: 0,
        beyond_slack: 0,
        worst_excess: 0.0,
    };
    for k in 0..log.len().saturating_sub(1) {
        if s[k].abs() < tol || clamp[k] != 0.0 || clamp[k + 1] != 0.0 {
            continue;
        }
        let (r0, r1) = (rho[k] - rho_hat[k], rho[k + 1] - rho_hat[k + 1]);
        let dv = lyapunov(s[k + 1], r1, gamma) - lyapunov(s[k], r0, gamma);
        st.checked += 1;
        if dv > 0.0 {
            st.increases += 1;
            let ds = s[k + 1] - s[k];
            let dr = r1 - r0;
            let slack = 0.5 * ds * ds + dr * dr / (2.0 * gamma);
            if dv > slack {
                st.beyond_slack += 1;
                st.worst_excess = st.worst_excess.max(dv - slack);
            }
        }
    }
    st
}

// ---------------------------------------------------------------- reports

/// Bound checks on one finished run: voltage and current reaching times
/// and Lyapunov monotonicity of the voltage loop.
///
/// A check is required only when the run meets the assumptions behind its
/// bound: the voltage-loop results assume the current loop delivers the
/// commanded power exactly (`ideal_current_loop`), the current-loop result
/// assumes a fixed reference (`current_reference` mode). Otherwise the
/// check is reported as informational.
pub fn verify_bounds(log: &RunLog, sc: &Scenario) -> Vec<Check> {
    let level = |required: bool| if required { Level::Required } else { Level::Informational };
    let mut out = Vec::new();
    if sc.mode == Mode::Cascade {
        let v = voltage_reaching(log, &sc.voltage);
        out.push(Check {
            name: "voltage_reaching_time".into(),
            level: level(sc.ideal_current_loop),
            passed: v.ok(),
            measured: v.measured.unwrap_or(f64::INFINITY),
            bound: v.bound,
            detail: format!("s0 = {:.6e}, rho_tilde0 = {:.3} W", v.s0, v.rho_tilde0),
        });
        let l = lyapunov_stats(log, &sc.voltage);
        out.push(Check {
            name: "lyapunov_monotonicity".into(),
            level: level(sc.ideal_current_loop),
            passed: l.fraction_ok() >= 0.999 && l.beyond_slack == 0,
            measured: l.fraction_ok(),
            bound: 0.999,
            detail: format!(
                "{} of {} pairs increased, {} beyond slack (worst {:.3e})",
                l.increases, l.checked, l.beyond_slack, l.worst_excess
            ),
        });
    }
    if !sc.ideal_current_loop {
        let c = current_reaching(log, sc);
        out.push(Check {
            name: "current_reaching_time".into(),
            level: level(sc.mode == Mode::CurrentReference),
            passed: c.s0_norm <= c.floor || c.ok(),
            measured: c.measured.unwrap_or(f64::INFINITY),
            bound: c.bound,
            detail: format!(
                "|s0| = {:.4} A, floor = {:.4} A, displayed interval l*eps/eta = {:.3e} s",
                c.s0_norm,
                c.floor,
                current_reaching_interval(&sc.current, &sc.plant)
            ),
        });
    }
    out
}

/// Trials used for the randomized reaching-time checks.
pub const TRIALS: usize = 20;

/// Whole property suite.
pub fn run_suite(seed: u64) -> Result<Report, SimError> {
    let mut checks = Vec::new();

    let t1 = voltage_reaching_trials(seed, TRIALS)?;
    let worst = t1.iter().map(|t| t.measured.unwrap_or(f64::INFINITY) / t.bound).fold(0.0, f64::max);
    checks.push(Check::required(
        "voltage_reaching_bound",
        t1.iter().all(ReachingTrial::ok),
        worst,
        1.0,
        format!("{} randomized voltage-loop runs, worst measured/bound ratio", t1.len()),
    ));

    let t2 = current_reaching_trials(seed, TRIALS)?;
    let worst = t2.iter().map(|t| t.measured.unwrap_or(f64::INFINITY) / t.bound).fold(0.0, f64::max);
    checks.push(Check::required(
        "current_reaching_bound",
        t2.iter().all(CurrentTrial::ok),
        worst,
        1.0,
        format!("{} randomized current-loop runs, worst measured/bound ratio", t2.len()),
    ));

    for (name, cases) in [("sliding_phase_time", sliding_phase_grid()), ("terminal_time", terminal_grid())] {
        let worst = cases.iter().map(TerminalCase::rel_err).fold(0.0, f64::max);
        checks.push(Check::required(
            name,
            worst <= 5e-3,
            worst,
            5e-3,
            format!("{} grid points, worst relative error against RK4", cases.len()),
        ));
    }

    let filter = filter_cases();
    let worst = filter.iter().map(|c| c.max_err - c.bound).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::required(
        "filter_error_bound",
        filter.iter().all(FilterCase::ok),
        worst,
        1e-4,
        format!("{} signal/sigma cases, worst excess of max error over eps/sigma", filter.len()),
    ));

    let err = saturation_identity_error(seed, 100_000);
    checks.push(Check::required(
        "saturation_identity",
        err <= 1e-12,
        err,
        1e-12,
        "100000 random vectors".into(),
    ));
    let (lhs, rhs) = saturation_bound_counterexample();
    checks.push(Check {
        name: "saturation_printed_bound".into(),
        level: Level::Informational,
        passed: lhs >= rhs,
        measured: lhs,
        bound: rhs,
        detail: "failed by construction: n = 1, eps = 1, s = 0.5 gives 0.25 < 0.5".into(),
    });

    let sc = scenarios::bundled("verify", &[])?;
    let log = run_scenario_log(&sc)?;
    checks.extend(verify_bounds(&log, &sc));

    Ok(Report { seed, checks })
}
