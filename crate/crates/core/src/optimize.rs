//! Profit maximization over a box of controllable rates, and local
//! sensitivity of profit to every rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamName, Scenario};
use crate::solver;

pub const DEFAULT_STARTS: usize = 8;
pub const DEFAULT_BUDGET_PER_START: usize = 2000;
/// Poll step (fraction of box width) below which a start stops.
pub const DEFAULT_STEP_TOL: f64 = 1e-6;
const INITIAL_STEP: f64 = 0.25;

/// Relative finite-difference step for [`sensitivity`].
pub const SENSITIVITY_REL_STEP: f64 = 1e-5;
/// Integrator tolerances are divided by this during sensitivity runs.
pub const SENSITIVITY_TOL_FACTOR: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBound {
    pub parameter: ParamName,
    pub lower: f64,
    pub upper: f64,
}

/// Which rates the marketer may move, within what box, and the values of
/// the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub controls: Vec<ControlBound>,
    /// Values for every rate; entries named in `controls` are overridden.
    pub fixed: ModelParams,
}

impl ControlSpec {
    pub fn new(fixed: ModelParams, controls: Vec<ControlBound>) -> Self {
        ControlSpec { controls, fixed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::InvalidControl("no controllable parameters".into()));
        }
        self.fixed.validate()?;
        for (k, c) in self.controls.iter().enumerate() {
            if self.controls[..k]
                .iter()
                .any(|o| o.parameter == c.parameter)
            {
                return Err(Error::InvalidControl(format!(
                    "{} listed more than once",
                    c.parameter
                )));
            }
            c.parameter.check(c.lower)?;
            c.parameter.check(c.upper)?;
            if c.lower >= c.upper {
                return Err(Error::InvalidControl(format!(
                    "{}: lower bound {} must be below upper bound {}",
                    c.parameter, c.lower, c.upper
                )));
            }
        }
        Ok(())
    }

    /// Parameters at a point of the unit cube.
    pub fn params_at(&self, unit: &[f64]) -> ModelParams {
        let mut p = self.fixed;
        for (c, &u) in self.controls.iter().zip(unit) {
            p.set(c.parameter, denormalize(c, u));
        }
        p
    }

    fn values_at(&self, unit: &[f64]) -> Vec<ControlValue> {
        self.controls
            .iter()
            .zip(unit)
            .map(|(c, &u)| ControlValue {
                parameter: c.parameter,
                value: denormalize(c, u),
            })
            .collect()
    }
}

// lower·(1-u) + upper·u hits both bounds exactly at u = 0 and u = 1
fn denormalize(c: &ControlBound, u: f64) -> f64 {
    c.lower * (1.0 - u) + c.upper * u
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlValue {
    pub parameter: ParamName,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget_per_start: usize,
    pub step_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget_per_start: DEFAULT_BUDGET_PER_START,
            step_tol: DEFAULT_STEP_TOL,
        }
    }
}

/// Summary of one compass-search run, in unit-cube coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub initial: Vec<f64>,
    pub best: Vec<f64>,
    pub best_profit: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub final_step: f64,
    /// Poll step fell below tolerance (as opposed to running out of budget).
    pub converged: bool,
    /// Incumbent profit after each poll.
    pub incumbent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best_params: ModelParams,
    pub best_controls: Vec<ControlValue>,
    pub best_profit: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Index of the start that produced the optimum.
    pub best_start: usize,
    pub seed: u64,
    pub starts: Vec<StartTrace>,
}

/// Latin-hypercube sample of `n` points in `[0, 1]^dim`.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            strata.swap(k, rng.gen_range(0..=k));
        }
        for (point, stratum) in points.iter_mut().zip(strata) {
            point[j] = (stratum as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

/// Compass search maximizing `objective` over the unit cube from `start`.
///
/// Each iteration polls `±step` along every axis (projected onto the cube),
/// moves to the best strictly improving poll point, and halves the step
/// when none improves. Failed evaluations count as `-∞`.
pub fn compass_search<F>(objective: F, start: &[f64], options: &SearchOptions) -> StartTrace
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let eval = |x: &[f64]| objective(x).unwrap_or(f64::NEG_INFINITY);
    let mut x = start.to_vec();
    let mut fx = eval(&x);
    let mut evaluations = 1;
    let mut step = INITIAL_STEP;
    let mut iterations = 0;
    let mut incumbent = vec![fx];

    while step >= options.step_tol && evaluations < options.budget_per_start {
        let mut best: Option<(Vec<f64>, f64)> = None;
        'poll: for j in 0..x.len() {
            for sign in [1.0, -1.0] {
                let moved = (x[j] + sign * step).clamp(0.0, 1.0);
                if moved == x[j] {
                    continue;
                }
                if evaluations >= options.budget_per_start {
                    break 'poll;
                }
                let mut y = x.clone();
                y[j] = moved;
                let fy = eval(&y);
                evaluations += 1;
                if fy > best.as_ref().map_or(fx, |b| b.1) {
                    best = Some((y, fy));
                }
            }
        }
        match best {
            Some((y, fy)) => {
                x = y;
                fx = fy;
            }
            None => step *= 0.5,
        }
        iterations += 1;
        incumbent.push(fx);
    }

    StartTrace {
        start: 0,
        initial: start.to_vec(),
        best: x,
        best_profit: fx,
        evaluations,
        iterations,
        final_step: step,
        converged: step < options.step_tol,
        incumbent,
    }
}

/// Maximizes `J(T)` over the control box with default search options.
pub fn maximize_profit(
    spec: &ControlSpec,
    scenario: &Scenario,
    starts: usize,
    seed: u64,
) -> Result<OptimResult> {
    maximize_profit_with(spec, scenario, starts, seed, &SearchOptions::default())
}

/// Multistart compass search: `starts` Latin-hypercube points drawn from a
/// ChaCha8 stream seeded with `seed`, one independent search per start,
/// best result kept (ties go to the lowest start index).
pub fn maximize_profit_with(
    spec: &ControlSpec,
    scenario: &Scenario,
    starts: usize,
    seed: u64,
    options: &SearchOptions,
) -> Result<OptimResult> {
    spec.validate()?;
    scenario.validate()?;
    if starts == 0 {
        return Err(Error::InvalidControl("need at least one start".into()));
    }
    if options.budget_per_start == 0 || !(options.step_tol > 0.0) {
        return Err(Error::InvalidControl(
            "search budget and step tolerance must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = latin_hypercube(starts, spec.controls.len(), &mut rng);

    let traces: Vec<StartTrace> = initial
        .par_iter()
        .enumerate()
        .map(|(k, x0)| {
            let objective = |u: &[f64]| solver::profit(&spec.params_at(u), scenario);
            StartTrace {
                start: k,
                ..compass_search(objective, x0, options)
            }
        })
        .collect();

    let best = traces.iter().fold(0, |b, t| {
        if t.best_profit > traces[b].best_profit {
            t.start
        } else {
            b
        }
    });
    let winner = &traces[best];
    Ok(OptimResult {
        best_params: spec.params_at(&winner.best),
        best_controls: spec.values_at(&winner.best),
        best_profit: winner.best_profit,
        evaluations: traces.iter().map(|t| t.evaluations).sum(),
        converged: winner.converged,
        best_start: best,
        seed,
        starts: traces,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub parameter: ParamName,
    pub value: f64,
    /// `∂J(T)/∂parameter`.
    pub derivative: f64,
    pub step: f64,
    /// Forward difference because the value sits on the domain boundary.
    pub one_sided: bool,
}

/// Finite-difference gradient of `J(T)` with respect to all ten rates.
///
/// Central differences with relative step [`SENSITIVITY_REL_STEP`], run at
/// tolerances [`SENSITIVITY_TOL_FACTOR`] times tighter than `scenario`. A
/// rate sitting at zero (allowed for `mu`, `delta_I`, `delta_P`) gets a
/// forward difference with absolute step `SENSITIVITY_REL_STEP` and is
/// flagged.
pub fn sensitivity(params: &ModelParams, scenario: &Scenario) -> Result<Vec<SensitivityEntry>> {
    params.validate()?;
    scenario.validate()?;
    let tight = scenario.with_tolerances(
        scenario.rel_tol / SENSITIVITY_TOL_FACTOR,
        scenario.abs_tol / SENSITIVITY_TOL_FACTOR,
    );
    let j = |p: &ModelParams| solver::profit(p, &tight);

    ParamName::ALL
        .par_iter()
        .map(|&name| {
            let value = params.get(name);
            let h = SENSITIVITY_REL_STEP * value.abs();
            let upper = value + if h > 0.0 { h } else { SENSITIVITY_REL_STEP };
            let one_sided = name.check(value - h).is_err() || h == 0.0;
            let (lower, derivative) = if one_sided {
                let jl = j(params)?;
                let ju = j(&params.with(name, upper))?;
                (value, (ju - jl) / (upper - value))
            } else {
                let lower = value - h;
                let jl = j(&params.with(name, lower))?;
                let ju = j(&params.with(name, upper))?;
                (lower, (ju - jl) / (upper - lower))
            };
            Ok(SensitivityEntry {
                parameter: name,
                value,
                derivative,
                step: upper - lower,
                one_sided,
            })
        })
        .collect()
}
