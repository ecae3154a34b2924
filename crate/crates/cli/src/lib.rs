//! Command-line front end for the SIPNS model: loads a [`RunConfig`],
//! runs one command and writes its CSV/JSON results into a fresh run
//! directory `<out>/<command>-<label>/` together with a `manifest.json`.

mod args;
pub mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sipns_core::analysis::{
    self, expected_directions, monotonicity_check, CheckOutcome, Direction, Output, SweepReport,
    ThresholdReport,
};
use sipns_core::optimize::{self, OptimResult, SearchOptions, SensitivityEntry};
use sipns_core::{solver, MarketState, ParamName};

pub use args::entry;
pub use config::RunConfig;
use output::{csv_fields, RunDir};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(sipns_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for numerical failures, 1 for everything the user can fix in the
    /// config or on the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl From<sipns_core::Error> for CliError {
    fn from(err: sipns_core::Error) -> Self {
        CliError::Model(err)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibrium,
    Sweep,
    Profit,
    Optimize,
    Sensitivity,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibrium => "equilibrium",
            Command::Sweep => "sweep",
            Command::Profit => "profit",
            Command::Optimize => "optimize",
            Command::Sensitivity => "sensitivity",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a run went and what it wrote.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    /// Human-readable lines for standard output.
    pub report: Vec<String>,
}

/// Validates `config`, runs `command` and writes its files under
/// `out/<command>-<label>`. Without a label the unix time in seconds is
/// used.
pub fn run(
    command: Command,
    config: &RunConfig,
    out: &Path,
    label: Option<&str>,
) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let label = match label {
        Some(l) => {
            if l.is_empty() || l.contains(['/', '\\']) || l == "." || l == ".." {
                return Err(CliError::Config(format!(
                    "label {l:?} is not a plain directory name"
                )));
            }
            l.to_string()
        }
        None => unix_seconds().to_string(),
    };

    let mut dir = RunDir::create(out.join(format!("{command}-{label}")))?;
    let report = match command {
        Command::Simulate => simulate(config, &mut dir)?,
        Command::Equilibrium => equilibrium(config, &mut dir)?,
        Command::Sweep => sweep(config, &mut dir)?,
        Command::Profit => profit(config, &mut dir)?,
        Command::Optimize => optimize(config, &mut dir)?,
        Command::Sensitivity => sensitivity(config, &mut dir)?,
    };
    dir.write_json(
        "manifest.json",
        &Manifest {
            command: command.as_str(),
            label: &label,
            seed: config.seed,
            config_sha256: output::sha256_hex(config.to_json().as_bytes()),
            versions: Versions {
                sipns_cli: env!("CARGO_PKG_VERSION"),
                sipns_core: sipns_core::VERSION,
            },
            files: dir.files().to_vec(),
        },
    )?;
    Ok(RunOutcome {
        dir: dir.path().to_path_buf(),
        files: dir.files().to_vec(),
        report,
    })
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    label: &'a str,
    seed: u64,
    config_sha256: String,
    versions: Versions,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Versions {
    sipns_cli: &'static str,
    sipns_core: &'static str,
}

fn state_line(prefix: &str, x: &MarketState) -> String {
    format!("{prefix} S={:?} I={:?} P={:?} N={:?}", x.s, x.i, x.p, x.n)
}

#[derive(Serialize)]
struct SimulateSummary {
    final_state: MarketState,
    profit: f64,
    rows: usize,
    step_count: usize,
    rejected_steps: usize,
}

fn simulate(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let grid = solver::interior_grid(config.scenario.horizon, config.simulate.samples);
    let traj = solver::integrate(&config.params, &config.scenario, Some(&grid))?;

    let mut csv = String::from("t,S,I,P,N,J\n");
    for k in 0..traj.len() {
        let x = &traj.states[k];
        csv_fields(
            &mut csv,
            &[traj.times[k], x.s, x.i, x.p, x.n, traj.profit_running[k]],
        );
        csv.push('\n');
    }
    dir.write_text("trajectory.csv", &csv)?;

    let final_state = traj.final_state();
    let summary = SimulateSummary {
        final_state,
        profit: traj.final_profit(),
        rows: traj.len(),
        step_count: traj.step_count,
        rejected_steps: traj.rejected_steps,
    };
    dir.write_json("summary.json", &summary)?;
    Ok(vec![
        state_line(&format!("t={:?}", config.scenario.horizon), &final_state),
        format!("J={:?}", summary.profit),
    ])
}

#[derive(Serialize)]
struct EquilibriumJson {
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "N")]
    n: f64,
    residual: f64,
}

fn equilibrium(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let x = sipns_core::equilibrium(&config.params)?;
    let residual = sipns_core::vector_field(&config.params, &x)?.norm_inf();
    dir.write_json(
        "equilibrium.json",
        &EquilibriumJson {
            s: x.s,
            i: x.i,
            p: x.p,
            n: x.n,
            residual,
        },
    )?;
    Ok(vec![
        state_line("equilibrium", &x),
        format!("residual={residual:?}"),
    ])
}

#[derive(Serialize)]
struct VerdictsJson<'a> {
    parameter: ParamName,
    all_converged: bool,
    verdicts: &'a std::collections::BTreeMap<Output, Direction>,
    checks: Vec<CheckOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<ThresholdReport>,
}

fn sweep(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let parameter = config.sweep.parameter;
    let report: SweepReport = analysis::sweep(
        &config.params,
        parameter,
        &config.sweep_grid(),
        &config.scenario,
    )?;

    let mut csv = String::from("value,S,I,P,N,J,converged\n");
    for pt in &report.points {
        let x = &pt.steady.state;
        csv_fields(&mut csv, &[pt.value, x.s, x.i, x.p, x.n, pt.profit]);
        csv.push_str(if pt.steady.converged {
            ",true\n"
        } else {
            ",false\n"
        });
    }
    dir.write_text("sweep.csv", &csv)?;

    let checks = monotonicity_check(&report, &expected_directions(parameter));
    let threshold = match (&config.threshold, parameter) {
        (Some(t), ParamName::GammaP) => Some(analysis::threshold_search_points(
            &config.params,
            &config.scenario,
            t.lower,
            t.upper,
            t.grid_points,
        )?),
        _ => None,
    };
    let mut lines: Vec<String> = report
        .verdicts
        .iter()
        .map(|(o, d)| format!("{parameter} -> {}: {d:?}", o.as_str()))
        .collect();
    let failed = checks.iter().filter(|c| !c.passed()).count();
    lines.push(format!(
        "checks: {} of {} passed",
        checks.len() - failed,
        checks.len()
    ));
    dir.write_json(
        "verdicts.json",
        &VerdictsJson {
            parameter,
            all_converged: report.all_converged(),
            verdicts: &report.verdicts,
            checks,
            threshold,
        },
    )?;
    Ok(lines)
}

#[derive(Serialize)]
struct ProfitJson {
    profit: f64,
    final_state: MarketState,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<ThresholdReport>,
}

fn profit(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let (final_state, profit) = solver::final_point(&config.params, &config.scenario)?;
    let threshold = match &config.threshold {
        Some(t) => Some(analysis::threshold_search_points(
            &config.params,
            &config.scenario,
            t.lower,
            t.upper,
            t.grid_points,
        )?),
        None => None,
    };
    let mut lines = vec![format!("J={profit:?}")];
    if let Some(t) = &threshold {
        lines.push(format!("gamma_P threshold: {:?}", t.outcome));
    }
    dir.write_json(
        "profit.json",
        &ProfitJson {
            profit,
            final_state,
            threshold,
        },
    )?;
    Ok(lines)
}

fn optimize(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let options = SearchOptions {
        budget_per_start: config.optimize.budget_per_start,
        ..SearchOptions::default()
    };
    let result: OptimResult = optimize::maximize_profit_with(
        &config.control_spec(),
        &config.scenario,
        config.optimize.starts,
        config.seed,
        &options,
    )?;
    dir.write_json("optim.json", &result)?;
    let mut lines = vec![format!(
        "best J={:?} (start {})",
        result.best_profit, result.best_start
    )];
    lines.extend(
        result
            .best_controls
            .iter()
            .map(|c| format!("{}={:?}", c.parameter, c.value)),
    );
    Ok(lines)
}

#[derive(Serialize)]
struct SensitivityJson {
    profit: f64,
    gradient: Vec<SensitivityEntry>,
}

fn sensitivity(config: &RunConfig, dir: &mut RunDir) -> Result<Vec<String>, CliError> {
    let profit = solver::profit(&config.params, &config.scenario)?;
    let gradient = optimize::sensitivity(&config.params, &config.scenario)?;
    let lines = gradient
        .iter()
        .map(|e| {
            format!(
                "dJ/d{}={:?}{}",
                e.parameter,
                e.derivative,
                if e.one_sided { " (one-sided)" } else { "" }
            )
        })
        .collect();
    dir.write_json("sensitivity.json", &SensitivityJson { profit, gradient })?;
    Ok(lines)
}
