use proptest::prelude::*;

use rectctl::simcore::verify::{current_reaching, verify_bounds, Level};
use rectctl::simcore::{Col, COLUMNS};
use rectctl::{run_scenario, run_scenario_log, scenarios, RunLog, Scenario};

fn csv(log: &RunLog) -> Vec<u8> {
    let mut v = Vec::new();
    log.write_csv(&mut v).unwrap();
    v
}

fn short_estimation(p0: f64, p1: f64, v0: f64) -> Scenario {
    scenarios::bundled(
        "estimation",
        &[
            format!("load.segments=[[0.0, {p0}], [0.005, {p1}]]"),
            format!("initial.v_dc={v0}"),
            "horizon=0.01".into(),
            "metrics.estimation_from=0.0".into(),
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reruns_are_bit_identical(p0 in 0.0..800.0f64, p1 in 0.0..800.0f64, v0 in 505.0..535.0f64) {
        let sc = short_estimation(p0, p1, v0);
        let (a, ma) = run_scenario(&sc).unwrap();
        let (b, mb) = run_scenario(&sc).unwrap();
        prop_assert_eq!(csv(&a), csv(&b));
        prop_assert_eq!(ma, mb);
    }
}

#[test]
fn equilibrium_stays_put() {
    let sc = scenarios::bundled("equilibrium", &[]).unwrap();
    let (log, m) = run_scenario(&sc).unwrap();
    assert_eq!(m.convergence_time, Some(0.0));
    assert_eq!(m.steady_state_error, 0.0);
    assert_eq!(m.ripple_pp, 0.0);
    assert_eq!(m.overshoot, 0.0);
    assert_eq!(m.control_energy, 0.0);
    assert_eq!(m.final_v_dc, 520.0);
    assert!(log.col(Col::Id).iter().chain(log.col(Col::Iq)).all(|&i| i == 0.0));
}

#[test]
fn csv_schema() {
    let sc = scenarios::bundled("equilibrium", &["horizon=0.001".into(), "decimation=100".into()]).unwrap();
    let log = run_scenario_log(&sc).unwrap();
    let text = String::from_utf8(csv(&log)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t [s],v_dc [V],v_dc_ref [V],z_tilde1 [V^2*s],z_tilde2 [V^2],s_v [V^(2p/q)],rho [W],\
         rho_hat [W],rho_eso [W],rho_tilde_est [W],y [V^2/s],i_d [A],i_q [A],i_d_ref [A],\
         i_q_ref [A],u_v [1],u_d [1],u_q [1],s_d [A],s_q [A],i_a [A],i_a_ref [A],clamp_v [1],\
         clamp_dq [1]"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for r in &rows {
        assert_eq!(r.split(',').count(), COLUMNS.len());
        assert!(r.split(',').all(|x| x.parse::<f64>().is_ok()));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!((t[10] - 1e-3).abs() < 1e-12);
}

fn current_run(eta: f64) -> (f64, f64) {
    let mut sc = scenarios::bundled(
        "current_compare",
        &["initial.i_d=1.6".into(), "horizon=0.01".into(), "decimation=1".into()],
    )
    .unwrap();
    sc.current.eta = eta;
    let log = run_scenario_log(&sc).unwrap();
    let c = current_reaching(&log, &sc);
    assert!(c.ok(), "eta {eta}: {c:?}");
    (c.measured.unwrap(), c.bound)
}

// halving η slows reaching; the recomputed bound still covers it
#[test]
fn halved_eta_still_within_bound() {
    let eta = scenarios::bundled("current_compare", &[]).unwrap().current.eta;
    let (t_full, b_full) = current_run(eta);
    let (t_half, b_half) = current_run(eta / 2.0);
    assert!(t_half > t_full, "{t_half} vs {t_full}");
    assert!(b_half > b_full);
}

#[test]
fn bound_levels_follow_assumptions() {
    let sc = scenarios::bundled("verify", &["horizon=0.02".into()]).unwrap();
    let log = run_scenario_log(&sc).unwrap();
    let checks = verify_bounds(&log, &sc);
    assert!(checks.iter().all(|c| c.level == Level::Required));
    assert!(checks.iter().any(|c| c.name == "voltage_reaching_time"));

    let sc = scenarios::bundled("voltage_compare", &["horizon=0.02".into()]).unwrap();
    let log = run_scenario_log(&sc).unwrap();
    let checks = verify_bounds(&log, &sc);
    assert_eq!(checks.len(), 3);
    assert!(checks.iter().all(|c| c.level == Level::Informational));
}
