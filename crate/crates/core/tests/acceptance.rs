//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion, plus
//! `[INFO]` lines for quantities that are reported but not decisive, and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use rectctl::simcore::verify::{self, CurrentTrial, FilterCase, ReachingTrial, TerminalCase};
use rectctl::{run_scenario, run_scenario_log, scenarios, Method, Metrics, RunLog, Scenario};

const SEED: u64 = 1;

#[derive(Default)]
struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.into());
        }
    }

    fn info(&self, name: &str, detail: String) {
        println!("[INFO] {name}: {detail}");
    }
}

fn scenario(name: &str, overrides: &[String]) -> Scenario {
    scenarios::bundled(name, overrides).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn with_controller(name: &str, m: Method) -> Scenario {
    scenario(name, &[format!("controller=\"{}\"", m.as_str())])
}

fn run(sc: &Scenario) -> (RunLog, Metrics) {
    run_scenario(sc).unwrap_or_else(|e| panic!("{}: {e}", sc.name))
}

fn ms(t: Option<f64>) -> String {
    t.map_or("none".into(), |t| format!("{:.3} ms", t * 1e3))
}

/// Relative difference, with `floor` guarding values near zero.
fn rel_shift(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn voltage(t: &mut Tally) {
    let sc = scenario("voltage_compare", &[]);
    let start = Instant::now();
    let (_, prop) = run(&sc);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = prop.convergence_time.is_some_and(|c| c <= 5e-3) && elapsed < 30.0;
    t.check(
        "voltage_convergence",
        ok,
        format!(
            "enters and stays in ±1% of 520 V at {} (limit 5 ms), runtime {elapsed:.2} s (limit 30 s)",
            ms(prop.convergence_time)
        ),
    );

    let base: Vec<(Method, Metrics)> = [Method::PiPr, Method::AdaptiveSta, Method::Itsmc]
        .par_iter()
        .map(|&m| (m, run(&with_controller("voltage_compare", m)).1))
        .collect();
    let tp = prop.convergence_time.unwrap_or(f64::INFINITY);
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, mb) in &base {
        let ratio = mb.convergence_time.unwrap_or(f64::INFINITY) / tp;
        ok &= ratio >= 3.0;
        parts.push(format!("{} {} ({ratio:.1}x)", m.as_str(), ms(mb.convergence_time)));
    }
    t.check(
        "voltage_baseline_ordering",
        ok,
        format!("proposed {} vs {} (limit 3x each)", ms(prop.convergence_time), parts.join(", ")),
    );
    let imp: Vec<String> = base
        .iter()
        .map(|(m, mb)| match mb.convergence_time {
            Some(b) => format!("{} {:.2}%", m.as_str(), 100.0 * (b - tp) / b),
            None => format!("{} n/a", m.as_str()),
        })
        .collect();
    t.info("voltage_improvements", imp.join(", "));
    let energies: Vec<f64> = std::iter::once(prop.control_energy)
        .chain(base.iter().map(|(_, m)| m.control_energy))
        .collect();
    let (lo, hi) = energies.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    t.info(
        "control_energy_spread",
        format!(
            "energies {:?} (proposed, pi_pr, adaptive_sta, itsmc), max/min {:.2}",
            energies.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>(),
            hi / lo
        ),
    );
}

fn current(t: &mut Tally) {
    let runs: Vec<(Method, Metrics)> = Method::ALL
        .par_iter()
        .map(|&m| (m, run(&with_controller("current_compare", m)).1))
        .collect();
    let prop = &runs[0].1;
    let times: Vec<f64> = runs.iter().map(|(_, m)| m.convergence_time.unwrap_or(f64::INFINITY)).collect();
    let fast = prop.convergence_time.is_some_and(|c| c <= 15e-3);
    let no_overshoot = prop.overshoot <= 1e-3;
    // proposed < adaptive STA < PI/PR < ITSMC
    let ordered = times[0] < times[2] && times[2] < times[1] && times[1] < times[3];
    t.check(
        "current_convergence",
        fast && no_overshoot && ordered,
        format!(
            "proposed {} (limit 15 ms), overshoot {:.2e} of the step (limit 1e-3); adaptive_sta {}, pi_pr {}, itsmc {}",
            ms(prop.convergence_time),
            prop.overshoot,
            ms(runs[2].1.convergence_time),
            ms(runs[1].1.convergence_time),
            ms(runs[3].1.convergence_time)
        ),
    );
}

fn bounds(t: &mut Tally) {
    let t1 = verify::voltage_reaching_trials(SEED, verify::TRIALS).expect("voltage reaching trials");
    let bad = t1.iter().filter(|x| !x.ok()).count();
    let worst = t1.iter().map(|x| x.measured.unwrap_or(f64::INFINITY) / x.bound).fold(0.0, f64::max);
    t.check(
        "voltage_reaching_bound",
        t1.len() >= 20 && t1.iter().all(ReachingTrial::ok),
        format!("{} trials, {bad} violations, worst measured/bound {worst:.3e}", t1.len()),
    );

    let t2 = verify::current_reaching_trials(SEED, verify::TRIALS).expect("current reaching trials");
    let bad = t2.iter().filter(|x| !x.ok()).count();
    let worst = t2.iter().map(|x| x.measured.unwrap_or(f64::INFINITY) / x.bound).fold(0.0, f64::max);
    t.check(
        "current_reaching_bound",
        t2.len() >= 20 && t2.iter().all(CurrentTrial::ok),
        format!("{} trials, {bad} violations, worst measured/bound {worst:.3}", t2.len()),
    );

    let a = verify::sliding_phase_grid();
    let b = verify::terminal_grid();
    let wa = a.iter().map(TerminalCase::rel_err).fold(0.0, f64::max);
    let wb = b.iter().map(TerminalCase::rel_err).fold(0.0, f64::max);
    t.check(
        "sliding_phase_and_terminal_times",
        a.len() >= 10 && b.len() >= 10 && wa <= 5e-3 && wb <= 5e-3,
        format!(
            "worst relative error {wa:.2e} (sliding phase, {} points), {wb:.2e} (terminal, {} points), limit 5e-3",
            a.len(),
            b.len()
        ),
    );

    let cases = verify::filter_cases();
    let worst = cases.iter().map(|c| c.max_err - c.bound).fold(f64::NEG_INFINITY, f64::max);
    t.check(
        "filter_error_bound",
        cases.iter().all(FilterCase::ok),
        format!("{} cases, worst max error minus eps/sigma {worst:.3e} (limit 1e-4)", cases.len()),
    );

    let err = verify::saturation_identity_error(SEED, 100_000);
    let (lhs, rhs) = verify::saturation_bound_counterexample();
    let counter = lhs < rhs && (lhs - 0.25).abs() < 1e-15 && (rhs - 0.5).abs() < 1e-15;
    t.check(
        "saturation_identity",
        err <= 1e-12 && counter,
        format!("max abs error {err:.2e} on 1e5 vectors (limit 1e-12); counterexample reproduced: {counter}"),
    );
    t.info(
        "saturation_printed_bound",
        format!("lower bound s*sat(s/eps) >= |s| fails at n = 1, eps = 1, s = 0.5: {lhs} < {rhs}"),
    );
}

fn lyapunov(t: &mut Tally) {
    let sc = scenario("verify", &[]);
    let log = run_scenario_log(&sc).expect("verify run");
    let l = verify::lyapunov_stats(&log, &sc.voltage);
    t.check(
        "lyapunov_monotonicity",
        l.fraction_ok() >= 0.999 && l.beyond_slack == 0,
        format!(
            "{} of {} sample pairs increased ({:.4}% non-increasing, limit 99.9%), {} beyond slack",
            l.increases,
            l.checked,
            100.0 * l.fraction_ok(),
            l.beyond_slack
        ),
    );
    let sc = scenario("voltage_compare", &[]);
    let log = run_scenario_log(&sc).expect("voltage comparison run");
    let l = verify::lyapunov_stats(&log, &sc.voltage);
    t.info(
        "lyapunov_monotonicity_full_cascade",
        format!(
            "with the simulated current loop: {} of {} pairs increased, {} beyond slack, worst excess {:.3e}",
            l.increases, l.checked, l.beyond_slack, l.worst_excess
        ),
    );
}

fn estimation(t: &mut Tally) {
    let (_, m) = run(&scenario("estimation", &[]));
    let a = &m.adaptive_estimator;
    let e = &m.eso_estimator;
    let ends_ok = !a.segment_end_errors.is_empty() && a.segment_end_errors.iter().all(|&x| x < 5.0);
    t.check(
        "disturbance_estimation",
        ends_ok && a.overshoot < e.overshoot,
        format!(
            "segment-end errors {:?} W (limit 5 W); step overshoot adaptive {:.3} W vs ESO {:.3} W",
            a.segment_end_errors.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
            a.overshoot,
            e.overshoot
        ),
    );
    let (_, m) = run(&scenario("voltage_compare", &[]));
    let a = &m.adaptive_estimator;
    let e = &m.eso_estimator;
    t.info(
        "disturbance_estimation_sinusoidal_load",
        format!(
            "after 50 ms: adaptive over/under {:.2}/{:.2} W, ESO over/under {:.2}/{:.2} W",
            a.peak_over, a.peak_under, e.peak_over, e.peak_under
        ),
    );
}

fn robustness(t: &mut Tally) {
    let (_, ramp) = run(&scenario("freq_ramp", &[]));
    let ramp_err = ramp.phase_a_rms_error.unwrap_or(f64::INFINITY);

    let factors = [0.9, 1.0, 1.1];
    let grid: Vec<(f64, f64)> = factors.iter().flat_map(|&l| factors.iter().map(move |&r| (l, r))).collect();
    let sweep: Vec<f64> = grid
        .par_iter()
        .map(|&(l, r)| {
            let sc = scenario("lr_sweep", &[format!("grid.l_factor={l}"), format!("grid.r_factor={r}")]);
            run(&sc).1.phase_a_rms_error.unwrap_or(f64::INFINITY)
        })
        .collect();
    let worst = sweep.iter().copied().fold(0.0, f64::max);
    t.check(
        "robustness",
        ramp_err < 0.05 && worst < 0.05,
        format!(
            "phase-A RMS error {:.4}% over the 2 s 60->59 Hz ramp, worst {:.4}% over the 9-point l, r sweep (limit 5%)",
            100.0 * ramp_err,
            100.0 * worst
        ),
    );

    let extra: Vec<String> = [1.0, 4.0]
        .par_iter()
        .map(|&d| {
            let sc = scenario(
                "freq_ramp",
                &[format!("grid.frequency=[[0.5, 60.0], [{}, 59.0]]", 0.5 + d), format!("horizon={}", 1.0 + d)],
            );
            let e = run(&sc).1.phase_a_rms_error.unwrap_or(f64::INFINITY);
            format!("{d} s ramp {:.4}%", 100.0 * e)
        })
        .collect();
    t.info("robustness_other_ramps", extra.join(", "));
}

fn chattering(t: &mut Tally) {
    let (_, m) = run(&scenario("chattering", &[]));
    t.check(
        "chattering",
        m.chattering_amplitude < 6e-3,
        format!("steady-state amplitude {:.3e} (limit 6e-3)", m.chattering_amplitude),
    );
}

fn determinism(t: &mut Tally) {
    let sc = scenario("voltage_compare", &[]);
    let half = scenario("voltage_compare", &["dt=5e-7".into(), "decimation=20".into()]);
    let mut runs: Vec<(RunLog, Metrics)> = [&sc, &sc, &half].par_iter().map(|s| run(s)).collect();
    let (_, hm) = runs.pop().unwrap();
    let (bl, bm) = runs.pop().unwrap();
    let (al, am) = runs.pop().unwrap();
    let csv = |l: &RunLog| {
        let mut v = Vec::new();
        l.write_csv(&mut v).unwrap();
        v
    };
    let identical = csv(&al) == csv(&bl) && am == bm;

    let t_or = |x: Option<f64>| x.unwrap_or(f64::INFINITY);
    let decisive = [
        ("convergence_time", t_or(am.convergence_time), t_or(hm.convergence_time), 0.0),
        ("rise_time", t_or(am.rise_time), t_or(hm.rise_time), 0.0),
        ("final_v_dc", am.final_v_dc, hm.final_v_dc, 0.0),
        ("steady_state_error", am.steady_state_error, hm.steady_state_error, 1e-6),
        ("ripple_pp", am.ripple_pp, hm.ripple_pp, 1e-6),
        ("overshoot", am.overshoot, hm.overshoot, 1e-6),
        ("control_energy", am.control_energy, hm.control_energy, 0.0),
        ("phase_a_rms_error", t_or(am.phase_a_rms_error), t_or(hm.phase_a_rms_error), 1e-9),
    ];
    let mut worst = ("", 0.0f64);
    for (name, a, b, floor) in decisive {
        let s = if a == b { 0.0 } else { rel_shift(a, b, floor) };
        if s.is_nan() || s > worst.1 {
            worst = (name, s);
        }
    }
    t.check(
        "determinism_and_step_convergence",
        identical && worst.1 < 5e-3,
        format!(
            "reruns bit-identical: {identical}; worst metric shift under dt halving {:.2e} ({}), limit 5e-3",
            worst.1, worst.0
        ),
    );
    t.info(
        "step_dependent_metrics",
        format!(
            "dt-halving shifts: chattering_amplitude {:.2e}, current_convergence_time {:.2e}, clamp_fraction {:.2e}",
            rel_shift(am.chattering_amplitude, hm.chattering_amplitude, 1e-12),
            rel_shift(t_or(am.current_convergence_time), t_or(hm.current_convergence_time), 0.0),
            rel_shift(am.clamp_fraction, hm.clamp_fraction, 1e-12)
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut t = Tally::default();
    voltage(&mut t);
    current(&mut t);
    bounds(&mut t);
    lyapunov(&mut t);
    estimation(&mut t);
    robustness(&mut t);
    chattering(&mut t);
    determinism(&mut t);
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if t.failed.is_empty() {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed: {}", t.failed.len(), t.failed.join(", "));
        ExitCode::FAILURE
    }
}
