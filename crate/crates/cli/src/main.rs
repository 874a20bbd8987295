use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use rectctl::simcore::verify::{self, Check, Level};
use rectctl::{run_scenario, scenarios, Method, Metrics, RunLog, Scenario, ScenarioError, SimError};

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "rectctl", version, about = "Rectifier control simulations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its time series and metrics.
    Run(Common),
    /// Run a scenario once per controller and report relative improvements.
    Compare {
        #[command(flatten)]
        common: Common,
        /// controllers to compare; the first is the reference for improvements
        #[arg(long, value_delimiter = ',', default_value = "proposed,pi_pr,adaptive_sta,itsmc")]
        controllers: Vec<Method>,
    },
    /// Run a grid of plant-perturbation factors and ramp durations.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        l_factors: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        r_factors: Option<Vec<f64>>,
        /// durations (s) of a 60 -> 59 Hz ramp
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        ramp_durations: Option<Vec<f64>>,
    },
    /// Run the bound and property suite.
    Verify {
        /// also check reaching-time bounds and Lyapunov monotonicity on this scenario
        scenario: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "override", short = 'O')]
        overrides: Vec<String>,
        /// directory for verify_report.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    ListScenarios,
}

#[derive(Args)]
struct Common {
    /// scenario file, or the name of a bundled scenario
    scenario: String,
    /// `path=value` override, e.g. `controller=pi_pr` or `voltage.gamma=1`
    #[arg(long = "override", short = 'O')]
    overrides: Vec<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// keep every n-th integrator step in the time series
    #[arg(long)]
    decimation: Option<usize>,
    /// write every integrator step
    #[arg(long, conflicts_with = "decimation")]
    full_rate: bool,
}

impl Common {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if self.full_rate {
            o.push("decimation=1".into());
        } else if let Some(d) = self.decimation {
            o.push(format!("decimation={d}"));
        }
        o
    }
}

/// Error carrying the process exit code.
struct Fail(u8, String);

impl From<ScenarioError> for Fail {
    fn from(e: ScenarioError) -> Self {
        Fail(EXIT_INVALID, e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail(EXIT_FAIL, e.to_string())
    }
}

fn load(arg: &str, overrides: &[String]) -> Result<Scenario, Fail> {
    let path = Path::new(arg);
    if path.is_file() {
        Ok(Scenario::from_path(path, overrides)?)
    } else if scenarios::source(arg).is_some() {
        Ok(scenarios::bundled(arg, overrides)?)
    } else {
        Err(Fail(EXIT_INVALID, format!("`{arg}` is neither a file nor a bundled scenario")))
    }
}

fn write_csv(log: &RunLog, path: &Path) -> Result<(), Fail> {
    let mut w = BufWriter::new(File::create(path)?);
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn metrics_json(sc: &Scenario, m: &Metrics) -> Value {
    let mut v = json!({
        "scenario": sc.name,
        "controller": sc.controller.as_str(),
        "inner_controller": sc.inner_method().as_str(),
        "dt": sc.dt,
        "horizon": sc.horizon,
    });
    let fields = serde_json::to_value(m).expect("metrics serialize");
    v.as_object_mut()
        .unwrap()
        .extend(fields.as_object().unwrap().clone());
    v
}

fn write_json(v: &Value, path: &Path) -> Result<(), Fail> {
    fs::write(path, serde_json::to_string_pretty(v).expect("json") + "\n")?;
    Ok(())
}

/// Writes the partial log of an aborted run and maps the error to an exit code.
fn handle_sim_error(e: SimError, out: &Path, stem: &str) -> Fail {
    match e {
        SimError::Scenario(e) => e.into(),
        SimError::Aborted { t, reason, partial } => {
            let path = out.join(format!("{stem}_timeseries.csv"));
            let note = match write_csv(&partial, &path) {
                Ok(()) => format!("partial log ({} rows) in {}", partial.len(), path.display()),
                Err(Fail(_, msg)) => format!("could not write partial log: {msg}"),
            };
            Fail(EXIT_ABORT, format!("simulation aborted at t = {t} s: {reason}; {note}"))
        }
    }
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or("none".into(), |t| format!("{:.3} ms", t * 1e3))
}

fn cmd_run(c: &Common) -> Result<(), Fail> {
    let sc = load(&c.scenario, &c.all_overrides())?;
    fs::create_dir_all(&c.out)?;
    let (log, m) = run_scenario(&sc).map_err(|e| handle_sim_error(e, &c.out, &sc.name))?;
    write_csv(&log, &c.out.join(format!("{}_timeseries.csv", sc.name)))?;
    write_json(&metrics_json(&sc, &m), &c.out.join(format!("{}_metrics.json", sc.name)))?;
    println!(
        "{}: controller {}, convergence {}, final v_dc {:.4} V, {} rows",
        sc.name,
        sc.controller.as_str(),
        fmt_time(m.convergence_time),
        m.final_v_dc,
        log.len()
    );
    Ok(())
}

/// `(t_base - t_ref) / t_base`, or `None` when either time is missing.
fn improvement(t_ref: Option<f64>, t_base: Option<f64>) -> Option<f64> {
    match (t_ref, t_base) {
        (Some(r), Some(b)) if b > 0.0 => Some((b - r) / b),
        _ => None,
    }
}

fn cmd_compare(c: &Common, controllers: &[Method]) -> Result<(), Fail> {
    if controllers.len() < 2 {
        return Err(Fail(EXIT_INVALID, "compare needs at least two controllers".into()));
    }
    let base = load(&c.scenario, &c.all_overrides())?;
    let runs: Vec<Scenario> = controllers
        .iter()
        .map(|m| {
            let mut o = c.all_overrides();
            o.push(format!("controller=\"{}\"", m.as_str()));
            load(&c.scenario, &o)
        })
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(&c.out)?;
    let results: Vec<_> = runs.par_iter().map(run_scenario).collect();

    let mut rows = Vec::new();
    let mut times = Vec::new();
    for (k, (sc, r)) in runs.iter().zip(results).enumerate() {
        let stem = format!("{}_{}_{}", base.name, k, sc.controller.as_str());
        let (log, m) = r.map_err(|e| handle_sim_error(e, &c.out, &stem))?;
        write_csv(&log, &c.out.join(format!("{stem}_timeseries.csv")))?;
        let mj = metrics_json(sc, &m);
        write_json(&mj, &c.out.join(format!("{stem}_metrics.json")))?;
        times.push(m.convergence_time);
        rows.push(mj);
    }
    let mut improvements = Vec::new();
    println!("{:<14} {:>14} {:>12} {:>14}", "controller", "convergence", "energy", "improvement");
    for (k, sc) in runs.iter().enumerate() {
        let imp = improvement(times[0], times[k]);
        if k > 0 {
            improvements.push(json!({
                "reference": controllers[0].as_str(),
                "baseline": sc.controller.as_str(),
                "improvement": imp,
            }));
        }
        println!(
            "{:<14} {:>14} {:>12.4e} {:>14}",
            sc.controller.as_str(),
            fmt_time(times[k]),
            rows[k]["control_energy"].as_f64().unwrap_or(f64::NAN),
            if k == 0 { "-".into() } else { imp.map_or("n/a".into(), |i| format!("{:.2} %", i * 100.0)) }
        );
    }
    let summary = json!({
        "scenario": base.name,
        "runs": rows,
        "improvements": improvements,
    });
    write_json(&summary, &c.out.join(format!("{}_compare.json", base.name)))
}

fn cmd_sweep(
    c: &Common,
    l_factors: Option<Vec<f64>>,
    r_factors: Option<Vec<f64>>,
    ramps: Option<Vec<f64>>,
) -> Result<(), Fail> {
    let base = load(&c.scenario, &c.all_overrides())?;
    let mut axes = Vec::new();
    for (name, v) in [("l_factors", &l_factors), ("r_factors", &r_factors), ("ramp_durations", &ramps)] {
        if let Some(v) = v {
            if v.is_empty() {
                return Err(Fail(EXIT_INVALID, format!("--{} is empty", name.replace('_', "-"))));
            }
            axes.push(name);
        }
    }
    if axes.is_empty() {
        return Err(Fail(EXIT_INVALID, "give at least one of --l-factors, --r-factors, --ramp-durations".into()));
    }
    let ls = l_factors.unwrap_or(vec![base.grid.l_factor]);
    let rs = r_factors.unwrap_or(vec![base.grid.r_factor]);
    let ramp_start = base.grid.frequency.first().map_or(0.5, |f| f.0);

    let mut points = Vec::new();
    for &l in &ls {
        for &r in &rs {
            match &ramps {
                Some(ds) => ds.iter().for_each(|&d| points.push((l, r, Some(d)))),
                None => points.push((l, r, None)),
            }
        }
    }
    let runs: Vec<Scenario> = points
        .iter()
        .map(|&(l, r, d)| {
            let mut o = c.all_overrides();
            o.push(format!("grid.l_factor={l}"));
            o.push(format!("grid.r_factor={r}"));
            if let Some(d) = d {
                o.push(format!("grid.frequency=[[{ramp_start}, 60.0], [{}, 59.0]]", ramp_start + d));
                o.push(format!("horizon={}", ramp_start + d + 0.5));
            }
            load(&c.scenario, &o)
        })
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(&c.out)?;
    let results: Vec<_> = runs.par_iter().map(run_scenario).collect();

    let mut csv = String::from(
        "l_factor,r_factor,ramp_duration,convergence_time,phase_a_rms_error,chattering_amplitude,steady_state_error,final_v_dc\n",
    );
    let mut rows = Vec::new();
    for (k, ((&(l, r, d), sc), res)) in points.iter().zip(&runs).zip(results).enumerate() {
        let (_, m) = res.map_err(|e| handle_sim_error(e, &c.out, &format!("{}_sweep_{k}", sc.name)))?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |x| x.to_string());
        csv.push_str(&format!(
            "{l},{r},{},{},{},{},{},{}\n",
            opt(d),
            opt(m.convergence_time),
            opt(m.phase_a_rms_error),
            m.chattering_amplitude,
            m.steady_state_error,
            m.final_v_dc
        ));
        println!(
            "l x{l:<5} r x{r:<5} ramp {:<6} convergence {:>12} phase-A error {}",
            d.map_or("-".into(), |d| format!("{d} s")),
            fmt_time(m.convergence_time),
            m.phase_a_rms_error.map_or("n/a".into(), |e| format!("{:.3} %", e * 100.0))
        );
        let mut row = metrics_json(sc, &m);
        let obj = row.as_object_mut().unwrap();
        obj.insert("l_factor".into(), json!(l));
        obj.insert("r_factor".into(), json!(r));
        obj.insert("ramp_duration".into(), json!(d));
        rows.push(row);
    }
    fs::write(c.out.join(format!("{}_sweep.csv", base.name)), csv)?;
    write_json(&json!({ "scenario": base.name, "rows": rows }), &c.out.join(format!("{}_sweep.json", base.name)))
}

fn print_check(c: &Check) {
    let (tag, held) = match (c.level, c.passed) {
        (Level::Informational, true) => ("INFO", " holds"),
        (Level::Informational, false) => ("INFO", " does not hold"),
        (_, true) => ("PASS", ""),
        (_, false) => ("FAIL", ""),
    };
    println!(
        "[{tag}] {}{held}: measured {:.6e}, bound {:.6e} ({})",
        c.name, c.measured, c.bound, c.detail
    );
}

fn cmd_verify(scenario: Option<&str>, seed: u64, overrides: &[String], out: Option<&Path>) -> Result<(), Fail> {
    let extra = match scenario {
        Some(s) => {
            let sc = load(s, overrides)?;
            let log = rectctl::run_scenario_log(&sc).map_err(|e| match e {
                SimError::Scenario(e) => e.into(),
                e => Fail(EXIT_ABORT, e.to_string()),
            })?;
            verify::verify_bounds(&log, &sc)
                .into_iter()
                .map(|mut c| {
                    c.name = format!("{}:{}", sc.name, c.name);
                    c
                })
                .collect()
        }
        None => Vec::new(),
    };
    let mut report = verify::run_suite(seed).map_err(|e| Fail(EXIT_FAIL, e.to_string()))?;
    report.checks.extend(extra);
    report.checks.iter().for_each(print_check);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let v = serde_json::to_value(&report).expect("report serializes");
        write_json(&v, &dir.join("verify_report.json"))?;
    }
    if report.required_passed() {
        Ok(())
    } else {
        Err(Fail(EXIT_FAIL, "at least one required property failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(c) => cmd_run(c),
        Cmd::Compare { common, controllers } => cmd_compare(common, controllers),
        Cmd::Sweep {
            common,
            l_factors,
            r_factors,
            ramp_durations,
        } => cmd_sweep(common, l_factors.clone(), r_factors.clone(), ramp_durations.clone()),
        Cmd::Verify {
            scenario,
            seed,
            overrides,
            out,
        } => cmd_verify(scenario.as_deref(), *seed, overrides, out.as_deref()),
        Cmd::ListScenarios => {
            for (name, text) in scenarios::BUNDLED {
                let desc = Scenario::from_toml_str(text, &[]).map(|s| s.description).unwrap_or_default();
                println!("{name:<16} {desc}");
            }
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
