//! Steady-state detection, one-parameter sweeps with monotonicity verdicts,
//! and the search for an interior profit maximum in the P-viscosity rate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{vector_field, MarketState, ModelParams, ParamName, Scenario};
use crate::solver;

/// Relative residual below which a state counts as steady.
pub const STEADY_EPS: f64 = 1e-8;
/// Relative variation treated as "no change" when judging trends.
pub const FLATNESS_EPS: f64 = 5e-3;
/// Integration window between steady-state checks.
pub const STEADY_WINDOW: f64 = 50.0;
/// Time after which steady-state detection gives up.
pub const STEADY_HORIZON_CAP: f64 = 1e4;
/// Minimum coarse-grid size for [`threshold_search`].
pub const THRESHOLD_GRID_POINTS: usize = 33;
/// Golden-section stopping width relative to the search box.
pub const THRESHOLD_REL_WIDTH: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateResult {
    pub state: MarketState,
    pub converged: bool,
    pub time_to_converge: f64,
    /// `‖vector_field‖∞` at `state`.
    pub residual: f64,
}

/// Integrates in windows of [`STEADY_WINDOW`] until the residual drops below
/// `STEADY_EPS · max(1, ‖x‖∞)`, or reports `converged = false` with the last
/// state once [`STEADY_HORIZON_CAP`] is reached.
///
/// `scenario.horizon` is ignored; the initial state and tolerances are used.
pub fn steady_state(params: &ModelParams, scenario: &Scenario) -> Result<SteadyStateResult> {
    params.validate()?;
    scenario.validate()?;
    let mut state = scenario.initial;
    let mut t = 0.0;
    loop {
        let residual = vector_field(params, &state)?.norm_inf();
        let converged = residual < STEADY_EPS * state.norm_inf().max(1.0);
        if converged || t >= STEADY_HORIZON_CAP {
            return Ok(SteadyStateResult {
                state,
                converged,
                time_to_converge: t,
                residual,
            });
        }
        let window = STEADY_WINDOW.min(STEADY_HORIZON_CAP - t);
        let run = scenario.with_initial(state).with_horizon(window);
        state = solver::final_point(params, &run)?.0;
        t += window;
    }
}

/// Quantities tracked along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Output {
    S,
    I,
    P,
    N,
    #[serde(rename = "J")]
    Profit,
}

impl Output {
    pub const ALL: [Output; 5] = [Output::S, Output::I, Output::P, Output::N, Output::Profit];

    pub fn as_str(self) -> &'static str {
        match self {
            Output::S => "S",
            Output::I => "I",
            Output::P => "P",
            Output::N => "N",
            Output::Profit => "J",
        }
    }

    pub fn is_steady_state(self) -> bool {
        !matches!(self, Output::Profit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    Constant,
    NonMonotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub steady: SteadyStateResult,
    /// `J(T)` at the scenario's horizon.
    pub profit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: ParamName,
    pub points: Vec<SweepPoint>,
    pub verdicts: BTreeMap<Output, Direction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdReport>,
}

impl SweepReport {
    /// Assembles a report from already computed points and fills the verdicts.
    pub fn from_points(parameter: ParamName, points: Vec<SweepPoint>) -> Self {
        let mut report = SweepReport {
            parameter,
            points,
            verdicts: BTreeMap::new(),
            threshold: None,
        };
        report.verdicts = Output::ALL
            .into_iter()
            .map(|o| (o, classify(&report.series(o))))
            .collect();
        report
    }

    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn series(&self, output: Output) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match output {
                Output::S => p.steady.state.s,
                Output::I => p.steady.state.i,
                Output::P => p.steady.state.p,
                Output::N => p.steady.state.n,
                Output::Profit => p.profit,
            })
            .collect()
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.steady.converged)
    }
}

/// `points` log-spaced values spanning one decade centred on `center`.
/// With an odd count the middle point is `center` exactly.
pub fn decade_grid(center: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![center; points];
    }
    let last = (points - 1) as f64;
    (0..points)
        .map(|k| center * 10f64.powf(k as f64 / last - 0.5))
        .collect()
}

/// `points` log-spaced values from `lower` to `upper` inclusive.
pub fn log_grid(lower: f64, upper: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lower],
        _ => {
            let (a, b) = (lower.ln(), upper.ln());
            let last = (points - 1) as f64;
            (0..points)
                .map(|k| match k {
                    0 => lower,
                    k if k == points - 1 => upper,
                    k => (a + (b - a) * k as f64 / last).exp(),
                })
                .collect()
        }
    }
}

fn validate_sweep_grid(parameter: ParamName, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty sweep grid".into()));
    }
    for (k, &v) in grid.iter().enumerate() {
        parameter.check(v)?;
        if k > 0 && v <= grid[k - 1] {
            return Err(Error::InvalidGrid(format!(
                "sweep grid must be strictly increasing (index {k})"
            )));
        }
    }
    Ok(())
}

/// Steady state and campaign profit at every grid value of `parameter`,
/// other rates held at `base`. The whole grid is validated before any
/// integration runs; points are evaluated in parallel and reported in grid
/// order.
pub fn sweep(
    base: &ModelParams,
    parameter: ParamName,
    grid: &[f64],
    scenario: &Scenario,
) -> Result<SweepReport> {
    base.validate()?;
    scenario.validate()?;
    validate_sweep_grid(parameter, grid)?;

    let points = grid
        .par_iter()
        .map(|&value| {
            let params = base.with(parameter, value);
            Ok(SweepPoint {
                value,
                steady: steady_state(&params, scenario)?,
                profit: solver::profit(&params, scenario)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::from_points(parameter, points))
}

/// Sign of a step with the flatness deadband: `1`, `-1` or `0`.
fn step_sign(a: f64, b: f64) -> i8 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        return 0;
    }
    let r = (b - a) / scale;
    if r > FLATNESS_EPS {
        1
    } else if r < -FLATNESS_EPS {
        -1
    } else {
        0
    }
}

fn is_flat(values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return true;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    (hi - lo) / scale < FLATNESS_EPS
}

/// Trend of a series: constant when its total relative variation is under
/// [`FLATNESS_EPS`], otherwise read from the signs of successive steps.
pub fn classify(values: &[f64]) -> Direction {
    if values.len() < 2 || is_flat(values) {
        return Direction::Constant;
    }
    let signs: Vec<i8> = values.windows(2).map(|w| step_sign(w[0], w[1])).collect();
    let up = signs.contains(&1);
    let down = signs.contains(&-1);
    match (up, down) {
        (true, false) => Direction::Increasing,
        (false, true) => Direction::Decreasing,
        (true, true) => Direction::NonMonotone,
        // a slow drift: every step within the deadband, the total is not
        (false, false) if values[values.len() - 1] > values[0] => Direction::Increasing,
        (false, false) => Direction::Decreasing,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CheckStatus {
    Pass,
    /// Earliest adjacent grid pair (indices) contradicting the expectation.
    Fail {
        interval: (usize, usize),
    },
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub output: Output,
    pub expected: Direction,
    pub observed: Direction,
    #[serde(flatten)]
    pub status: CheckStatus,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

fn first_step(values: &[f64], pred: impl Fn(i8) -> bool) -> Option<(usize, usize)> {
    values
        .windows(2)
        .position(|w| pred(step_sign(w[0], w[1])))
        .map(|k| (k, k + 1))
}

fn judge(values: &[f64], expected: Direction) -> (Direction, CheckStatus) {
    let observed = classify(values);
    if observed == expected {
        return (observed, CheckStatus::Pass);
    }
    let interval = match expected {
        Direction::Increasing => first_step(values, |s| s < 0),
        Direction::Decreasing => first_step(values, |s| s > 0),
        Direction::Constant => first_step(values, |s| s != 0),
        Direction::NonMonotone => None,
    }
    .unwrap_or((0, 1));
    (observed, CheckStatus::Fail { interval })
}

/// Compares a report against expected trends.
///
/// Steady-state outputs are inconclusive unless every grid point converged.
/// Profit is a finite-horizon quantity and is judged regardless.
pub fn monotonicity_check(
    report: &SweepReport,
    expected: &[(Output, Direction)],
) -> Vec<CheckOutcome> {
    let converged = report.all_converged();
    expected
        .iter()
        .map(|&(output, direction)| {
            let values = report.series(output);
            if output.is_steady_state() && !converged {
                return CheckOutcome {
                    output,
                    expected: direction,
                    observed: classify(&values),
                    status: CheckStatus::Inconclusive,
                };
            }
            let (observed, status) = judge(&values, direction);
            CheckOutcome {
                output,
                expected: direction,
                observed,
                status,
            }
        })
        .collect()
}

/// Published trends for each rate, as (output, direction) pairs.
///
/// The published conclusions for the N-exit rate contradict each other on
/// I and P (one says both rise, the next that both fall). The closed-form
/// equilibrium settles it: I* and P* rise with δN while N* falls, and that
/// is what the table holds. Profit against γP is not monotone (it rises up
/// to a threshold, then falls), so it is covered by [`threshold_search`]
/// instead of this table.
pub fn expected_directions(parameter: ParamName) -> Vec<(Output, Direction)> {
    use Direction::{Constant as C, Decreasing as D, Increasing as U};
    use Output::*;
    let (s, i, p, n, profit) = match parameter {
        ParamName::Mu => (C, U, U, U, Some(U)),
        ParamName::DeltaI => (U, D, D, D, Some(D)),
        ParamName::DeltaP => (U, D, D, D, Some(D)),
        ParamName::DeltaN => (C, U, U, D, Some(U)),
        ParamName::AlphaP => (D, U, U, U, Some(U)),
        ParamName::AlphaN => (U, D, D, U, Some(D)),
        ParamName::BetaP => (D, U, U, U, Some(U)),
        ParamName::BetaN => (C, D, D, D, Some(D)),
        ParamName::GammaI => (U, D, D, D, Some(U)),
        ParamName::GammaP => (U, D, D, D, None),
    };
    let mut table = vec![(S, s), (I, i), (P, p), (N, n)];
    if let Some(d) = profit {
        table.push((Profit, d));
    }
    table
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThresholdOutcome {
    /// Profit peaks strictly inside the box.
    Interior {
        theta: f64,
        profit_at_theta: f64,
        /// Final golden-section bracket around `theta`.
        bracket: (f64, f64),
        /// Coarse-grid neighbours of the best grid point.
        coarse_bracket: (f64, f64),
    },
    /// The best coarse-grid value sits on the box edge.
    NoInteriorThreshold { best_value: f64, best_profit: f64 },
    /// Some grid evaluations failed; indices listed.
    Inconclusive { failed: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub grid: Vec<f64>,
    /// Profit per grid point, `None` where evaluation failed.
    pub profits: Vec<Option<f64>>,
    pub outcome: ThresholdOutcome,
}

/// Looks for an interior maximum of campaign profit in `gamma_P` on
/// `[lower, upper]`: a log-spaced coarse scan, then golden-section
/// refinement around the best interior grid point.
pub fn threshold_search(
    base: &ModelParams,
    scenario: &Scenario,
    lower: f64,
    upper: f64,
) -> Result<ThresholdReport> {
    threshold_search_points(base, scenario, lower, upper, THRESHOLD_GRID_POINTS)
}

pub fn threshold_search_points(
    base: &ModelParams,
    scenario: &Scenario,
    lower: f64,
    upper: f64,
    points: usize,
) -> Result<ThresholdReport> {
    base.validate()?;
    scenario.validate()?;
    ParamName::GammaP.check(lower)?;
    ParamName::GammaP.check(upper)?;
    maximize_on_box(
        |gamma_p| solver::profit(&base.with(ParamName::GammaP, gamma_p), scenario),
        lower,
        upper,
        points,
    )
}

/// Coarse-scan-then-golden-section maximizer behind [`threshold_search`],
/// generic over the objective.
pub fn maximize_on_box<F>(
    objective: F,
    lower: f64,
    upper: f64,
    points: usize,
) -> Result<ThresholdReport>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(lower > 0.0 && lower < upper && upper.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "threshold box needs 0 < lower < upper, got [{lower}, {upper}]"
        )));
    }
    if points < THRESHOLD_GRID_POINTS {
        return Err(Error::InvalidGrid(format!(
            "threshold grid needs at least {THRESHOLD_GRID_POINTS} points, got {points}"
        )));
    }
    let grid = log_grid(lower, upper, points);
    let profits: Vec<Option<f64>> = grid.par_iter().map(|&x| objective(x).ok()).collect();

    let failed: Vec<usize> = profits
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.is_none().then_some(k))
        .collect();
    if !failed.is_empty() {
        return Ok(ThresholdReport {
            grid,
            profits,
            outcome: ThresholdOutcome::Inconclusive { failed },
        });
    }

    let values: Vec<f64> = profits.iter().map(|p| p.unwrap()).collect();
    // first index of the maximum, so ties resolve towards the lower edge
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, &v)| if v > values[b] { k } else { b });

    let outcome = if best == 0 || best == grid.len() - 1 {
        ThresholdOutcome::NoInteriorThreshold {
            best_value: grid[best],
            best_profit: values[best],
        }
    } else {
        let coarse_bracket = (grid[best - 1], grid[best + 1]);
        let tol = THRESHOLD_REL_WIDTH * (upper - lower);
        let refined = golden_section_max(&objective, coarse_bracket.0, coarse_bracket.1, tol)?;
        // the refinement never reports worse than the grid point it started from
        let (theta, profit_at_theta) = if refined.value >= values[best] {
            (refined.argmax, refined.value)
        } else {
            (grid[best], values[best])
        };
        ThresholdOutcome::Interior {
            theta,
            profit_at_theta,
            bracket: refined.bracket,
            coarse_bracket,
        }
    };
    Ok(ThresholdReport {
        grid,
        profits,
        outcome,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldenResult {
    pub argmax: f64,
    pub value: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section_max<F>(f: F, a: f64, b: f64, tol: f64) -> Result<GoldenResult>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    let (argmax, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(GoldenResult {
        argmax,
        value,
        bracket: (a, b),
        evaluations,
    })
}
