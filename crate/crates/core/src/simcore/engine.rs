//! Fixed-step RK4 engine.
//!
//! Control outputs (u_v, P*, i*, u_dq) are computed once per step and held
//! over it; plant, filter, observer, adaptation and controller integrators
//! share one state vector and are integrated together.

use std::f64::consts::PI;

use crate::baselines::{
    itsmc_frac, itsmc_output, itsmc_surface, pi_output, sta_output, sta_rate, Method,
};
use crate::currctl::{current_control, current_refs, current_surface, surface_integrand, CurrentCommand, CurrentLoopState};
use crate::error::{ControlError, SimError};
use crate::estimator::{adapt_rate, eso_rate, filter_rate, rho_tilde_estimate, EsoState};
use crate::plant::{grid_v_d, phase_a, plant_rhs, PlantParams, PlantState};
use crate::voltctl::{rho_hat_window, voltage_control, voltage_surface, VoltageCommand, VoltageLoopState};

use super::metrics::{compute_metrics, Metrics};
use super::runlog::{RunLog, NCOL};
use super::scenario::{Mode, Scenario};
use super::rk4_t;

const ID: usize = 0;
const IQ: usize = 1;
const VDC: usize = 2;
const TH: usize = 3;
const Z1: usize = 4;
const ETAF: usize = 5;
const RHO: usize = 6;
const ACC: usize = 7; // d, q
const E1: usize = 9;
const E2: usize = 10;
const VB: usize = 11; // voltage baseline integrators
const CB1: usize = 13; // d, q
const CB2: usize = 15; // d, q
const N: usize = 17;

/// Outputs held over one step.
#[derive(Debug, Clone, Copy, Default)]
struct Held {
    v_ref: f64,
    z_ref: f64,
    volt: VoltageCommand,
    p_star: f64,
    i_ref: [f64; 2],
    cur: CurrentCommand,
}

/// Controller-side plant parameters at time `t` (nominal l, r; actual grid frequency).
fn ctrl_params(sc: &Scenario, t: f64) -> PlantParams {
    PlantParams {
        f_grid: sc.grid.frequency_at(t, sc.plant.f_grid),
        ..sc.plant
    }
}

fn grid_voltage(sc: &Scenario, t: f64) -> [f64; 2] {
    [grid_v_d(sc.grid.amplitude_at(t, sc.plant.v_ll_rms)), 0.0]
}

fn is_cascade(sc: &Scenario) -> bool {
    sc.mode == Mode::Cascade
}

fn adapts(sc: &Scenario) -> bool {
    is_cascade(sc) && sc.controller == Method::Proposed
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Maps a commanded error rate to duty ratios through the model terms.
fn current_from_rate(
    e: [f64; 2],
    i_ref: [f64; 2],
    di_ref: [f64; 2],
    rate: [f64; 2],
    v: [f64; 2],
    v_dc: f64,
    p: &PlantParams,
) -> CurrentCommand {
    let wl = p.omega_g() * p.l;
    let psi = crate::currctl::psi_term(i_ref, di_ref, v, p);
    CurrentCommand::from_raw([
        (-p.r * e[0] + wl * e[1] + psi[0] - p.l * rate[0]) / v_dc,
        (-p.r * e[1] - wl * e[0] + psi[1] - p.l * rate[1]) / v_dc,
    ])
}

fn controls(sc: &Scenario, t: f64, x: &[f64; N], prev_ref: Option<[f64; 2]>, period: f64) -> Result<Held, ControlError> {
    let pc = ctrl_params(sc, t);
    let c = pc.c;
    let v = x[VDC];
    if v.is_nan() || v <= 0.0 {
        return Err(ControlError::NonPositiveVdc(v));
    }
    let v_ref = sc.reference.v_dc_at(t, sc.plant.v_dc_ref);
    let z_ref = 0.5 * v_ref * v_ref;
    let g = &sc.voltage;
    let b = &sc.baselines;
    let p_v = g.p_v_base;
    let v_dq = grid_voltage(sc, t);

    let (volt, i_ref) = match sc.mode {
        Mode::Cascade => {
            let rho_eso = -c * x[E2];
            let e = v - v_ref;
            let volt = match sc.controller {
                Method::Proposed => {
                    let lp = VoltageLoopState::new(x[Z1], v, v_ref, g);
                    voltage_control(&lp, x[RHO], g, &pc)?
                }
                Method::PiPr => VoltageCommand::from_raw(pi_output(-e, x[VB], &b.pi_voltage)),
                Method::AdaptiveSta => {
                    let rate = sta_output(e, x[VB], &b.sta_voltage);
                    VoltageCommand::from_raw((rho_eso + c * v * rate) / p_v)
                }
                Method::Itsmc => {
                    let gi = &b.itsmc_voltage;
                    let s = itsmc_surface(e, x[VB], x[VB + 1], gi);
                    let rate = itsmc_output(e, s, gi);
                    VoltageCommand::from_raw((rho_eso + c * v * rate) / p_v)
                }
            };
            let i_ref = current_refs(volt.u, v_dq[0], sc.current.ref_interpretation, p_v)?;
            (volt, i_ref)
        }
        Mode::CurrentReference => (VoltageCommand::default(), sc.reference.i_dq_at(t)),
    };
    let p_star = volt.u * p_v;
    // A slope beyond what any duty ratio can drive is a jump, not a
    // trackable reference: its derivative is dropped.
    let slew = (v + v_dq[0].hypot(v_dq[1])) / pc.l;
    let di_ref = match prev_ref {
        Some(p) => [0, 1].map(|k| {
            let d = (i_ref[k] - p[k]) / period;
            if d.abs() > slew {
                0.0
            } else {
                d
            }
        }),
        None => [0.0; 2],
    };

    let cur = if sc.ideal_current_loop {
        CurrentCommand::default()
    } else {
        let i = [x[ID], x[IQ]];
        let e = sub(i, i_ref);
        match sc.inner_method() {
            Method::Proposed => {
                let lp = CurrentLoopState::new(i, i_ref, di_ref, [x[ACC], x[ACC + 1]], sc.current.beta);
                current_control(&lp, v_dq, v, &sc.current, &pc)?
            }
            Method::PiPr => {
                let gp = &b.pi_current;
                let wl = pc.omega_g() * pc.l;
                // e here is i* - i
                CurrentCommand::from_raw([
                    (v_dq[0] + wl * i[1] - pi_output(-e[0], x[CB1], gp)) / v,
                    (v_dq[1] - wl * i[0] - pi_output(-e[1], x[CB1 + 1], gp)) / v,
                ])
            }
            Method::AdaptiveSta => {
                let gs = &b.sta_current;
                let rate = [sta_output(e[0], x[CB1], gs), sta_output(e[1], x[CB1 + 1], gs)];
                current_from_rate(e, i_ref, di_ref, rate, v_dq, v, &pc)
            }
            Method::Itsmc => {
                let gi = &b.itsmc_current;
                let rate = [0, 1].map(|k| {
                    let s = itsmc_surface(e[k], x[CB1 + k], x[CB2 + k], gi);
                    itsmc_output(e[k], s, gi)
                });
                current_from_rate(e, i_ref, di_ref, rate, v_dq, v, &pc)
            }
        }
    };
    if !(volt.u.is_finite() && cur.u.iter().all(|u| u.is_finite())) {
        return Err(ControlError::NonFinite("control output"));
    }
    Ok(Held {
        v_ref,
        z_ref,
        volt,
        p_star,
        i_ref,
        cur,
    })
}

fn derivative(sc: &Scenario, t: f64, x: &[f64; N], h: &Held) -> [f64; N] {
    let mut d = [0.0; N];
    let pc = ctrl_params(sc, t);
    let c = pc.c;
    let v = x[VDC];
    let rho = sc.load.power(t, v);
    let v_dq = grid_voltage(sc, t);

    if sc.ideal_current_loop {
        if !sc.stiff_dc_link {
            d[VDC] = (h.p_star - rho) / (c * v);
        }
    } else {
        let pp = PlantParams {
            l: pc.l * sc.grid.l_factor,
            r: pc.r * sc.grid.r_factor,
            ..pc
        };
        let st = PlantState {
            i_d: x[ID],
            i_q: x[IQ],
            v_dc: v,
        };
        let pd = plant_rhs(&st, h.cur.u, v_dq, rho / v, &pp);
        d[ID] = pd[0];
        d[IQ] = pd[1];
        if !sc.stiff_dc_link {
            d[VDC] = pd[2];
        }
    }
    d[TH] = pc.omega_g();

    let z = 0.5 * v * v;
    let z2 = h.z_ref - z;
    let g = &sc.voltage;
    d[Z1] = z2;
    d[ETAF] = filter_rate(x[ETAF], z, g.sigma);
    if adapts(sc) {
        let s = voltage_surface(x[Z1], z2, g);
        let y = x[ETAF] + g.sigma * z;
        let rte = rho_tilde_estimate(y, h.volt.u, g.p_v_base, x[RHO], c, sc.estimator.rho_tilde_form);
        let rate = adapt_rate(s, z2, rte, g, &pc);
        d[RHO] = if h.volt.clamp.blocks(rate) { 0.0 } else { rate };
    }
    let eso = EsoState {
        z1_hat: x[E1],
        z2_hat: x[E2],
        bandwidth: sc.estimator.eso_bandwidth,
    };
    let de = eso_rate(&eso, z, h.p_star / c);
    d[E1] = de[0];
    d[E2] = de[1];

    let b = &sc.baselines;
    if is_cascade(sc) {
        let e = v - h.v_ref;
        match sc.controller {
            Method::Proposed => {}
            Method::PiPr => {
                // the integrator raises u when v < v*
                d[VB] = if h.volt.clamp.blocks(-e) { 0.0 } else { -e };
            }
            Method::AdaptiveSta => d[VB] = sta_rate(e, &b.sta_voltage),
            Method::Itsmc => {
                d[VB] = e;
                d[VB + 1] = itsmc_frac(e, &b.itsmc_voltage);
            }
        }
    }

    if !sc.ideal_current_loop {
        let e = sub([x[ID], x[IQ]], h.i_ref);
        let f = surface_integrand(e, &sc.current);
        d[ACC] = f[0];
        d[ACC + 1] = f[1];
        match sc.inner_method() {
            Method::Proposed => {}
            Method::PiPr => {
                for k in 0..2 {
                    // u falls as the integral of (i* - i) grows
                    let rate = -e[k];
                    let deepen = (h.cur.u_raw[k] > 1.0 && rate < 0.0) || (h.cur.u_raw[k] < -1.0 && rate > 0.0);
                    d[CB1 + k] = if deepen { 0.0 } else { rate };
                }
            }
            Method::AdaptiveSta => {
                for k in 0..2 {
                    d[CB1 + k] = sta_rate(e[k], &b.sta_current);
                }
            }
            Method::Itsmc => {
                for k in 0..2 {
                    d[CB1 + k] = e[k];
                    d[CB2 + k] = itsmc_frac(e[k], &b.itsmc_current);
                }
            }
        }
    }
    d
}

/// Keeps `new` from ending further outside `[lo, hi]` than `old`.
fn project(new: f64, old: f64, lo: f64, hi: f64) -> f64 {
    if new > hi {
        hi.max(new.min(old))
    } else if new < lo {
        lo.min(new.max(old))
    } else {
        new
    }
}

fn log_row(sc: &Scenario, t: f64, x: &[f64; N], h: &Held) -> [f64; NCOL] {
    let c = sc.plant.c;
    let g = &sc.voltage;
    let v = x[VDC];
    let z = 0.5 * v * v;
    let z2 = h.z_ref - z;
    let y = x[ETAF] + g.sigma * z;
    let i = if sc.ideal_current_loop { h.i_ref } else { [x[ID], x[IQ]] };
    let s_dq = current_surface(sub(i, h.i_ref), [x[ACC], x[ACC + 1]], sc.current.beta);
    let rte = rho_tilde_estimate(y, h.volt.u, g.p_v_base, x[RHO], c, sc.estimator.rho_tilde_form);
    [
        t,
        v,
        h.v_ref,
        x[Z1],
        z2,
        voltage_surface(x[Z1], z2, g),
        sc.load.power(t, v),
        x[RHO],
        -c * x[E2],
        rte,
        y,
        i[0],
        i[1],
        h.i_ref[0],
        h.i_ref[1],
        h.volt.u,
        h.cur.u[0],
        h.cur.u[1],
        s_dq[0],
        s_dq[1],
        phase_a(i, x[TH]),
        phase_a(h.i_ref, x[TH]),
        h.volt.clamp.code() as f64,
        h.cur.clamped.iter().filter(|c| **c).count() as f64,
    ]
}

fn initial_state(sc: &Scenario) -> [f64; N] {
    let mut x = [0.0; N];
    let v0 = sc.v_dc0();
    let z0 = 0.5 * v0 * v0;
    x[ID] = sc.initial.i_d;
    x[IQ] = sc.initial.i_q;
    x[VDC] = v0;
    x[ETAF] = -sc.voltage.sigma * z0;
    x[RHO] = sc.estimator.rho_hat0;
    x[E1] = z0;
    x
}

/// Runs a validated scenario and returns the decimated log.
pub fn run_scenario_log(sc: &Scenario) -> Result<RunLog, SimError> {
    sc.validate()?;
    run_unchecked(sc)
}

fn run_unchecked(sc: &Scenario) -> Result<RunLog, SimError> {
    let steps = sc.steps();
    let dec = sc.effective_decimation();
    let mut log = RunLog::new(sc.dt * dec as f64, steps / dec + 1);
    let mut x = initial_state(sc);
    let mut prev_ref = None;
    let div = sc.control_divider;
    let mut held: Option<Held> = None;
    let abort = |t: f64, reason: String, log: RunLog| SimError::Aborted {
        t,
        reason,
        partial: Box::new(log),
    };

    for n in 0..=steps {
        let t = n as f64 * sc.dt;
        let h = match held {
            Some(h) if n % div != 0 => h,
            _ => match controls(sc, t, &x, prev_ref, sc.dt * div as f64) {
                Ok(h) => h,
                Err(e) => return Err(abort(t, e.to_string(), log)),
            },
        };
        held = Some(h);
        prev_ref = Some(h.i_ref);
        if sc.ideal_current_loop {
            x[ID] = h.i_ref[0];
            x[IQ] = h.i_ref[1];
        }
        if n % dec == 0 {
            log.push(&log_row(sc, t, &x, &h));
        }
        if n == steps {
            break;
        }

        let old = x;
        x = rk4_t(t, x, sc.dt, |tt, xs| derivative(sc, tt, &xs, &h));
        x[TH] %= 2.0 * PI;

        if adapts(sc) {
            let lp = VoltageLoopState::new(x[Z1], x[VDC], h.v_ref, &sc.voltage);
            let (lo, hi) = rho_hat_window(&lp, &sc.voltage, &ctrl_params(sc, t + sc.dt));
            x[RHO] = project(x[RHO], old[RHO], lo, hi);
        } else if is_cascade(sc) && sc.controller == Method::PiPr {
            let g = &sc.baselines.pi_voltage;
            let e = h.v_ref - x[VDC];
            let (lo, hi) = (-g.kp * e / g.ki, (1.0 - g.kp * e) / g.ki);
            x[VB] = project(x[VB], old[VB], lo, hi);
        }

        let t1 = t + sc.dt;
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(abort(t1, format!("non-finite state component {k}"), log));
        }
        if x[VDC].is_nan() || x[VDC] <= 0.0 {
            return Err(abort(t1, format!("DC-link voltage fell to {} V", x[VDC]), log));
        }
    }
    Ok(log)
}

/// Segment boundaries used for the estimator segment-end errors.
pub(crate) fn segment_ends(sc: &Scenario) -> Vec<f64> {
    let mut ends: Vec<f64> = sc.load.segment_starts().into_iter().skip(1).collect();
    ends.push(sc.horizon);
    ends
}

/// Runs a scenario and computes its metrics.
pub fn run_scenario(sc: &Scenario) -> Result<(RunLog, Metrics), SimError> {
    let log = run_scenario_log(sc)?;
    let m = compute_metrics(&log, &sc.metrics, sc.mode, &segment_ends(sc));
    Ok((log, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(extra: &str) -> Scenario {
        let text = format!(
            "name = \"t\"\nhorizon = 0.05\ndt = 1e-6\n{extra}\n\
             [load]\nkind = \"piecewise_constant_power\"\nsegments = [[0.0, 500.0]]\n\
             [voltage]\ndelta = 900.0\neps_rate = 1e4\nboundary_layer = 100.0\n"
        );
        Scenario::from_toml_str(&text, &[]).unwrap()
    }

    #[test]
    fn project_never_moves_outward() {
        assert_eq!(project(5.0, 0.0, -1.0, 1.0), 1.0);
        assert_eq!(project(5.0, 3.0, -1.0, 1.0), 3.0);
        assert_eq!(project(2.0, 3.0, -1.0, 1.0), 2.0);
        assert_eq!(project(-4.0, -2.0, -1.0, 1.0), -2.0);
        assert_eq!(project(0.5, 9.0, -1.0, 1.0), 0.5);
    }

    #[test]
    fn equilibrium_stays_put() {
        // at v = v*, i = 0 and no load nothing should move
        let sc = base("stiff_dc_link = true\nmode = \"current_reference\"\n[reference]\ni_dq = [[0.0, 0.0, 0.0]]\n");
        let log = run_scenario_log(&sc).unwrap();
        let id = log.col(super::super::runlog::Col::Id);
        assert!(id.iter().all(|i| i.abs() < 1e-9), "{:?}", id.last());
    }

    #[test]
    fn ideal_loop_energy_balance() {
        // c v dv/dt = P* - ρ with the ideal inner loop
        let sc = base("ideal_current_loop = true\ndecimation = 1");
        let log = run_scenario_log(&sc).unwrap();
        use super::super::runlog::Col;
        let (v, u, rho) = (log.col(Col::VDc), log.col(Col::Uv), log.col(Col::Rho));
        let dt = log.period;
        for k in (1000..log.len() - 1).step_by(997) {
            let lhs = 0.5 * (v[k + 1] * v[k + 1] - v[k] * v[k]) * sc.plant.c / dt;
            let rhs = u[k] * sc.voltage.p_v_base - rho[k];
            assert!((lhs - rhs).abs() < 1e-3 * (1.0 + rhs.abs()), "{k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn decimation_controls_row_count() {
        let sc = base("decimation = 100");
        let log = run_scenario_log(&sc).unwrap();
        assert_eq!(log.len(), 501);
        assert!((log.period - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn abort_keeps_partial_log() {
        // a constant-power load far above the command capacity drains the link
        // validation is bypassed: the load is far beyond the declared bound
        let mut sc = base("ideal_current_loop = true\ndecimation = 1");
        sc.load = crate::plant::LoadProfile::PiecewiseConstantPower { segments: vec![(0.0, 1e6)] };
        sc.voltage.p_v_base = 1.0;
        sc.horizon = 0.5;
        match run_unchecked(&sc) {
            Err(SimError::Aborted { partial, t, .. }) => {
                assert!(!partial.is_empty());
                assert!(t > 0.0 && t < 0.5);
            }
            other => panic!("expected abort, got {:?}", other.map(|l| l.len())),
        }
    }

    #[test]
    fn control_divider_holds_commands() {
        let sc = base("decimation = 1\ncontrol_divider = 10\n");
        let log = run_scenario_log(&sc).unwrap();
        let u = log.col(super::super::runlog::Col::Uv);
        for block in u.chunks(10) {
            assert!(block.iter().all(|&x| x == block[0]));
        }
        assert!(u.windows(2).any(|w| w[0] != w[1]));
    }
}
