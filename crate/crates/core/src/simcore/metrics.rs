use serde::{Deserialize, Serialize};

use crate::math::min_max;
use crate::simcore::runlog::{Col, RunLog};
use crate::simcore::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// convergence band, relative to the reference
    pub band: f64,
    /// final fraction of the horizon used for ripple, error and chattering
    pub steady_fraction: f64,
    /// start of the phase-A tracking-error window (s)
    pub tracking_from: f64,
    /// start of the disturbance-estimation error window (s)
    pub estimation_from: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            band: 0.01,
            steady_fraction: 0.2,
            tracking_from: 0.0,
            estimation_from: 0.0,
        }
    }
}

impl MetricsConfig {
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if !(self.band > 0.0 && self.band < 1.0) {
            return Err(("band", format!("must lie in (0, 1), got {}", self.band)));
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return Err(("steady_fraction", format!("must lie in (0, 1], got {}", self.steady_fraction)));
        }
        for (name, v) in [("tracking_from", self.tracking_from), ("estimation_from", self.estimation_from)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Error statistics of one disturbance estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct EstimatorErrors {
    /// max(0, max(estimate - ρ)) in the window (W)
    pub peak_over: f64,
    /// max(0, max(ρ - estimate)) in the window (W)
    pub peak_under: f64,
    pub rms: f64,
    /// |estimate - ρ| just before each piecewise segment ends (W)
    pub segment_end_errors: Vec<f64>,
    /// Peak overshoot (W). With a load that is constant on each segment,
    /// the largest excursion past the segment's value in the direction the
    /// estimate approaches it from; otherwise `max(peak_over, peak_under)`.
    pub overshoot: f64,
}

impl EstimatorErrors {
    pub fn peak(&self) -> f64 {
        self.peak_over.max(self.peak_under)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Metrics {
    /// voltage convergence in cascade mode, current convergence otherwise (s)
    pub convergence_time: Option<f64>,
    pub voltage_convergence_time: Option<f64>,
    pub current_convergence_time: Option<f64>,
    /// 10-90 % rise time of the primary signal (s)
    pub rise_time: Option<f64>,
    /// peak-to-peak of the primary signal in the steady window
    pub ripple_pp: f64,
    /// mean absolute error in the steady window
    pub steady_state_error: f64,
    /// excursion past the reference, as a fraction of the step
    pub overshoot: f64,
    /// peak-to-peak of the detrended, normalized phase-A current error
    pub chattering_amplitude: f64,
    /// RMS phase-A error over RMS phase-A reference
    pub phase_a_rms_error: Option<f64>,
    /// sqrt(sum u^2 dt) of the loop's control signal
    pub control_energy: f64,
    /// fraction of samples with the voltage control clamped
    pub clamp_fraction: f64,
    pub final_v_dc: f64,
    pub adaptive_estimator: EstimatorErrors,
    pub eso_estimator: EstimatorErrors,
}

/// First time after which `|err| <= band` for every later sample, with
/// linear interpolation of the last crossing. `None` if the final sample
/// is outside the band.
pub fn convergence_time(t: &[f64], err: &[f64], band: &[f64]) -> Option<f64> {
    let n = t.len();
    if n == 0 {
        return None;
    }
    let last_out = (0..n).rev().find(|&k| err[k].abs() > band[k]);
    match last_out {
        None => Some(t[0]),
        Some(k) if k + 1 == n => None,
        Some(k) => {
            let a = err[k].abs() - band[k];
            let b = err[k + 1].abs() - band[k + 1];
            let frac = if a - b > 0.0 { a / (a - b) } else { 1.0 };
            Some(t[k] + frac * (t[k + 1] - t[k]))
        }
    }
}

/// First interpolated time at which `y` crosses `level` moving from `y[0]`.
fn first_crossing(t: &[f64], y: &[f64], level: f64) -> Option<f64> {
    let up = level >= y[0];
    for k in 1..y.len() {
        let hit = if up { y[k] >= level } else { y[k] <= level };
        if hit {
            let (y0, y1) = (y[k - 1], y[k]);
            let frac = if y1 != y0 { (level - y0) / (y1 - y0) } else { 1.0 };
            return Some(t[k - 1] + frac.clamp(0.0, 1.0) * (t[k] - t[k - 1]));
        }
    }
    None
}

/// 10-90 % rise time of `y` toward `target`.
pub fn rise_time(t: &[f64], y: &[f64], target: f64) -> Option<f64> {
    if y.is_empty() || y[0] == target {
        return None;
    }
    let span = target - y[0];
    let t10 = first_crossing(t, y, y[0] + 0.1 * span)?;
    let t90 = first_crossing(t, y, y[0] + 0.9 * span)?;
    Some(t90 - t10)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Removes the least-squares line from `y`.
fn detrend(t: &[f64], y: &[f64]) -> Vec<f64> {
    let (mt, my) = (mean(t), mean(y));
    let sxx: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    t.iter().zip(y).map(|(a, b)| b - my - slope * (a - mt)).collect()
}

fn pk_pk(xs: &[f64]) -> f64 {
    min_max(xs).map_or(0.0, |(lo, hi)| hi - lo)
}

fn estimator_errors(t: &[f64], est: &[f64], rho: &[f64], from: f64, segment_ends: &[f64]) -> EstimatorErrors {
    let start = t.partition_point(|&x| x < from);
    let err: Vec<f64> = est[start..].iter().zip(&rho[start..]).map(|(e, r)| e - r).collect();
    let (lo, hi) = min_max(&err).unwrap_or((0.0, 0.0));
    let rms = mean(&err.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt();
    let segment_end_errors = segment_ends
        .iter()
        .filter_map(|&end| {
            let k = t.partition_point(|&x| x < end);
            (k > 0).then(|| (est[k - 1] - rho[k - 1]).abs())
        })
        .collect();
    let peak_over = hi.max(0.0);
    let peak_under = (-lo).max(0.0);
    EstimatorErrors {
        peak_over,
        peak_under,
        rms,
        segment_end_errors,
        overshoot: step_overshoot(t, est, rho, segment_ends).unwrap_or(peak_over.max(peak_under)),
    }
}

/// Largest per-segment overshoot, or `None` if ρ varies inside a segment.
fn step_overshoot(t: &[f64], est: &[f64], rho: &[f64], segment_ends: &[f64]) -> Option<f64> {
    let mut worst = 0.0f64;
    let mut a = 0;
    for &end in segment_ends {
        let b = t.partition_point(|&x| x < end).max(a + 1).min(t.len());
        let level = rho[a];
        if rho[a..b].iter().any(|r| *r != level) {
            return None;
        }
        let dir = (level - est[a]).signum();
        for e in &est[a..b] {
            let past = if dir == 0.0 { (e - level).abs() } else { dir * (e - level) };
            worst = worst.max(past);
        }
        a = b;
        if a >= t.len() {
            break;
        }
    }
    // + 0.0 turns a -0.0 maximum into 0.0
    (!segment_ends.is_empty()).then_some(worst + 0.0)
}

/// Metrics of a run. `segment_ends` are the end times of piecewise load
/// segments (empty for smooth loads).
pub fn compute_metrics(log: &RunLog, cfg: &MetricsConfig, mode: Mode, segment_ends: &[f64]) -> Metrics {
    let t = log.t();
    let n = t.len();
    if n == 0 {
        return Metrics::default();
    }
    let horizon = t[n - 1];
    let steady = t.partition_point(|&x| x < horizon * (1.0 - cfg.steady_fraction)).min(n - 1);

    let v = log.col(Col::VDc);
    let v_ref = log.col(Col::VDcRef);
    let v_err: Vec<f64> = v.iter().zip(v_ref).map(|(a, b)| a - b).collect();
    let v_band: Vec<f64> = v_ref.iter().map(|r| cfg.band * r.abs()).collect();
    let voltage_convergence_time = convergence_time(t, &v_err, &v_band);

    let (id, iq) = (log.col(Col::Id), log.col(Col::Iq));
    let (idr, iqr) = (log.col(Col::IdRef), log.col(Col::IqRef));
    let i_err: Vec<f64> = (0..n).map(|k| (id[k] - idr[k]).hypot(iq[k] - iqr[k])).collect();
    let i_band: Vec<f64> = (0..n).map(|k| cfg.band * idr[k].hypot(iqr[k])).collect();
    let current_convergence_time = if i_band[n - 1] > 0.0 {
        convergence_time(t, &i_err, &i_band)
    } else {
        None
    };

    let (y, r, convergence) = match mode {
        Mode::Cascade => (v, v_ref, voltage_convergence_time),
        Mode::CurrentReference => (id, idr, current_convergence_time),
    };
    let target = r[n - 1];
    let rise = rise_time(t, y, target);
    let step = target - y[0];
    let overshoot = if step != 0.0 {
        let dir = step.signum();
        (0..n).map(|k| dir * (y[k] - r[k])).fold(0.0f64, f64::max) / step.abs()
    } else {
        0.0
    };
    let ripple_pp = pk_pk(&y[steady..]);
    let steady_state_error = mean(&(steady..n).map(|k| (y[k] - r[k]).abs()).collect::<Vec<_>>());

    let (ia, iar) = (log.col(Col::Ia), log.col(Col::IaRef));
    let ref_amp = iar[steady..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let chattering_amplitude = if ref_amp > 0.0 {
        let e: Vec<f64> = (steady..n).map(|k| (ia[k] - iar[k]) / ref_amp).collect();
        pk_pk(&detrend(&t[steady..], &e))
    } else {
        0.0
    };
    let tr = t.partition_point(|&x| x < cfg.tracking_from).min(n - 1);
    let ref_ms = mean(&iar[tr..].iter().map(|x| x * x).collect::<Vec<_>>());
    let phase_a_rms_error = (ref_ms > 0.0).then(|| {
        let e_ms = mean(&(tr..n).map(|k| (ia[k] - iar[k]).powi(2)).collect::<Vec<_>>());
        (e_ms / ref_ms).sqrt()
    });

    let energy = match mode {
        Mode::Cascade => log.col(Col::Uv).iter().map(|u| u * u).sum::<f64>(),
        Mode::CurrentReference => log
            .col(Col::Ud)
            .iter()
            .zip(log.col(Col::Uq))
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>(),
    };
    let clamp_fraction = log.col(Col::ClampV).iter().filter(|c| **c != 0.0).count() as f64 / n as f64;

    let rho = log.col(Col::Rho);
    Metrics {
        convergence_time: convergence,
        voltage_convergence_time,
        current_convergence_time,
        rise_time: rise,
        ripple_pp,
        steady_state_error,
        overshoot,
        chattering_amplitude,
        phase_a_rms_error,
        control_energy: (energy * log.period).sqrt(),
        clamp_fraction,
        final_v_dc: v[n - 1],
        adaptive_estimator: estimator_errors(t, log.col(Col::RhoHat), rho, cfg.estimation_from, segment_ends),
        eso_estimator: estimator_errors(t, log.col(Col::RhoEso), rho, cfg.estimation_from, segment_ends),
    }
}
