//! Fixed-step engine, scenario schema, run logs, metrics and bound checks.

mod engine;
mod metrics;
mod runlog;
mod scenario;
pub mod verify;

pub use engine::{run_scenario, run_scenario_log};
pub use metrics::{compute_metrics, convergence_time, rise_time, Metrics, MetricsConfig};
pub use runlog::{Col, RunLog, COLUMNS};
pub use scenario::{
    apply_override, InitialState, Mode, ReferenceSchedule, Scenario,
};

/// Classical RK4 step for an autonomous system.
pub fn rk4<const N: usize>(x: [f64; N], dt: f64, mut f: impl FnMut([f64; N]) -> [f64; N]) -> [f64; N] {
    rk4_t(0.0, x, dt, |_, x| f(x))
}

/// Classical RK4 step for `x' = f(t, x)`.
pub fn rk4_t<const N: usize>(
    t: f64,
    x: [f64; N],
    dt: f64,
    mut f: impl FnMut(f64, [f64; N]) -> [f64; N],
) -> [f64; N] {
    let axpy = |a: &[f64; N], h: f64, k: &[f64; N]| {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * ki;
        }
        out
    };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, axpy(&x, 0.5 * dt, &k1));
    let k3 = f(t + 0.5 * dt, axpy(&x, 0.5 * dt, &k2));
    let k4 = f(t + dt, axpy(&x, dt, &k3));
    let mut out = x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_zero_dynamics() {
        let x = [1.5, -2.0, 3.0];
        assert_eq!(rk4(x, 1e-3, |_| [0.0; 3]), x);
    }

    #[test]
    fn rk4_decay_factor() {
        // one RK4 step of x' = -x multiplies by 1 - h + h²/2 - h³/6 + h⁴/24
        let h = 1e-3;
        let x = rk4([1.0], h, |x| [-x[0]]);
        let expect = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - expect).abs() < 1e-15);
        assert!((x[0] - 0.9990005).abs() < 1e-9);
        assert!((x[0] - (-h).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_time_dependent() {
        // x' = t over [0, 1] is integrated exactly
        let mut x = [0.0];
        let dt = 0.1;
        for k in 0..10 {
            x = rk4_t(k as f64 * dt, x, dt, |t, _| [t]);
        }
        assert!((x[0] - 0.5).abs() < 1e-12);
    }
}
