//! Adaptive integration of the market dynamics with the campaign profit
//! carried along as a fifth state component.
//!
//! The stepper is the Dormand–Prince 5(4) pair with FSAL, a
//! proportional-integral step controller and the standard 4th-order
//! continuous extension for sampling between steps. The profit integral
//! `J(t) = βP ∫ P S dt` is appended to the state with `dJ/dt = βP P S`,
//! so it gets the same local error control as the compartments.

use crate::error::{Error, Result};
use crate::model::{rhs, MarketState, ModelParams, Scenario, COMPONENTS, NEGATIVITY_FLOOR};

const DIM: usize = 5;
type State = [f64; DIM];

// Dormand–Prince 5(4) tableau.

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// Step controller.
const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - PI_BETA * 0.75;
const MAX_SHRINK: f64 = 5.0; // 1 / fac1 with fac1 = 0.2
const MAX_GROW: f64 = 0.1; // 1 / fac2 with fac2 = 10

/// Time-ordered samples of an integration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MarketState>,
    /// Accumulated profit `J(t)` at each sample time. Reported as a running
    /// maximum: the integrand is non-negative, but the fifth-order weights
    /// and the dense interpolant can dip by round-off where it vanishes.
    pub profit_running: Vec<f64>,
    /// Attempted steps, accepted and rejected.
    pub step_count: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            profit_running: Vec::with_capacity(n),
            step_count: 0,
            rejected_steps: 0,
        }
    }

    fn push(&mut self, t: f64, y: &State) {
        self.times.push(t);
        self.states
            .push(MarketState::new(y[0], y[1], y[2], y[3]).clamped());
        let floor = self.profit_running.last().copied().unwrap_or(f64::NEG_INFINITY);
        self.profit_running.push(y[4].max(floor));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> MarketState {
        *self.states.last().expect("trajectory always holds t = 0")
    }

    /// `J(T)`.
    pub fn final_profit(&self) -> f64 {
        *self
            .profit_running
            .last()
            .expect("trajectory always holds t = 0")
    }
}

enum Sampling<'a> {
    /// Every accepted step.
    Steps,
    /// 0, the requested times, and T.
    Grid(&'a [f64]),
    /// 0 and T only.
    Endpoints,
}

/// Integrates over `[0, T]`.
///
/// Without a `sample_grid` the trajectory holds every accepted step. With
/// one, it holds `t = 0`, each grid time (interpolated with the dense
/// output), and `t = T`; grid times equal to 0 or T are not duplicated.
pub fn integrate(
    params: &ModelParams,
    scenario: &Scenario,
    sample_grid: Option<&[f64]>,
) -> Result<Trajectory> {
    match sample_grid {
        Some(grid) => {
            validate_grid(grid, scenario.horizon)?;
            run(params, scenario, Sampling::Grid(grid))
        }
        None => run(params, scenario, Sampling::Steps),
    }
}

/// Expected overall profit `J(T)` with unit profit per purchase.
pub fn profit(params: &ModelParams, scenario: &Scenario) -> Result<f64> {
    Ok(run(params, scenario, Sampling::Endpoints)?.final_profit())
}

/// Final state and profit only.
pub fn final_point(params: &ModelParams, scenario: &Scenario) -> Result<(MarketState, f64)> {
    let traj = run(params, scenario, Sampling::Endpoints)?;
    Ok((traj.final_state(), traj.final_profit()))
}

/// `n` evenly spaced interior sample times `k T / (n + 1)`, `k = 1..=n`.
pub fn interior_grid(horizon: f64, n: usize) -> Vec<f64> {
    let step = horizon / (n as f64 + 1.0);
    (1..=n).map(|k| k as f64 * step).collect()
}

fn validate_grid(grid: &[f64], horizon: f64) -> Result<()> {
    for (k, &t) in grid.iter().enumerate() {
        if !t.is_finite() || t < 0.0 || t > horizon {
            return Err(Error::InvalidGrid(format!(
                "sample time {t} at index {k} outside [0, {horizon}]"
            )));
        }
        if k > 0 && t <= grid[k - 1] {
            return Err(Error::InvalidGrid(format!(
                "sample times must be strictly increasing (index {k})"
            )));
        }
    }
    Ok(())
}

#[inline]
fn augmented_rhs(params: &ModelParams, y: &State) -> State {
    let d = rhs(params, &[y[0], y[1], y[2], y[3]]);
    [d[0], d[1], d[2], d[3], params.beta_p * y[2] * y[0]]
}

#[inline]
fn combine(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (w, v) in terms {
            acc += w * v[k];
        }
        *o += h * acc;
    }
    out
}

/// One Dormand–Prince step from `(y, k1)`. Returns the 5th-order solution,
/// the stages needed for dense output, and the last stage (FSAL).
struct StepResult {
    y_new: State,
    k: [State; 7],
    error: State,
}

fn dopri_step(params: &ModelParams, y: &State, k1: &State, h: f64) -> StepResult {
    let k2 = augmented_rhs(params, &combine(y, h, &[(A21, k1)]));
    let k3 = augmented_rhs(params, &combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = augmented_rhs(params, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = augmented_rhs(
        params,
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = augmented_rhs(
        params,
        &combine(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = combine(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = augmented_rhs(params, &y_new);
    let error = combine(
        &[0.0; DIM],
        h,
        &[
            (E1, k1),
            (E3, &k3),
            (E4, &k4),
            (E5, &k5),
            (E6, &k6),
            (E7, &k7),
        ],
    );
    StepResult {
        y_new,
        k: [*k1, k2, k3, k4, k5, k6, k7],
        error,
    }
}

fn error_norm(error: &State, y: &State, y_new: &State, rtol: f64, atol: f64) -> f64 {
    let sum: f64 = (0..DIM)
        .map(|k| {
            let sk = atol + rtol * y[k].abs().max(y_new[k].abs());
            (error[k] / sk).powi(2)
        })
        .sum();
    (sum / DIM as f64).sqrt()
}

/// Coefficients of the continuous extension over one accepted step.
struct DenseSegment {
    t0: f64,
    h: f64,
    r: [State; 5],
}

impl DenseSegment {
    fn new(t0: f64, h: f64, y: &State, step: &StepResult) -> Self {
        let k = &step.k;
        let mut r = [[0.0; DIM]; 5];
        for i in 0..DIM {
            let ydiff = step.y_new[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            r[0][i] = y[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * k[6][i] - bspl;
            r[4][i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        DenseSegment { t0, h, r }
    }

    fn eval(&self, t: f64) -> State {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.r;
        std::array::from_fn(|i| {
            r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
        })
    }
}

/// Starting step from the local derivative scale (Hairer–Nørsett–Wanner).
fn initial_step(
    params: &ModelParams,
    y: &State,
    f0: &State,
    rtol: f64,
    atol: f64,
    hmax: f64,
) -> f64 {
    let scale: State = std::array::from_fn(|k| atol + rtol * y[k].abs());
    let dnf: f64 = (0..DIM).map(|k| (f0[k] / scale[k]).powi(2)).sum();
    let dny: f64 = (0..DIM).map(|k| (y[k] / scale[k]).powi(2)).sum();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1 = combine(y, h, &[(1.0, f0)]);
    let f1 = augmented_rhs(params, &y1);
    let der2 = (0..DIM)
        .map(|k| ((f1[k] - f0[k]) / scale[k]).powi(2))
        .sum::<f64>()
        .sqrt()
        / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(hmax)
}

fn check_negativity(y: &State, t: f64) -> Result<()> {
    for (k, component) in COMPONENTS.iter().enumerate() {
        if y[k] < NEGATIVITY_FLOOR {
            return Err(Error::Negativity {
                component,
                value: y[k],
                t,
            });
        }
    }
    Ok(())
}

fn run(params: &ModelParams, scenario: &Scenario, sampling: Sampling<'_>) -> Result<Trajectory> {
    params.validate()?;
    scenario.validate()?;

    let horizon = scenario.horizon;
    let (rtol, atol) = (scenario.rel_tol, scenario.abs_tol);
    let init = scenario.initial;
    let mut y: State = [init.s, init.i, init.p, init.n, 0.0];
    let mut t = 0.0;

    let (grid, capacity): (&[f64], usize) = match sampling {
        Sampling::Grid(g) => (g, g.len() + 2),
        Sampling::Steps => (&[], 256),
        Sampling::Endpoints => (&[], 2),
    };
    let record_steps = matches!(sampling, Sampling::Steps);
    let mut traj = Trajectory::with_capacity(capacity);
    traj.push(0.0, &y);
    // grid times at 0 coincide with the initial sample
    let mut next_sample = grid.iter().take_while(|&&g| g <= 0.0).count();

    let mut k1 = augmented_rhs(params, &y);
    if let Some(k) = k1.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: ["dS", "dI", "dP", "dN", "dJ"][k],
        });
    }
    let mut h = initial_step(params, &y, &k1, rtol, atol, horizon);
    // previous accepted error, for the integral part of the controller
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    while t < horizon {
        if traj.step_count >= scenario.max_steps {
            let t_reached = t;
            traj.push(t, &y);
            return Err(Error::NonConvergence {
                max_steps: scenario.max_steps,
                t_reached,
                partial: Box::new(traj),
            });
        }
        let last = t + 1.01 * h >= horizon;
        if last {
            h = horizon - t;
        }

        let step = dopri_step(params, &y, &k1, h);
        traj.step_count += 1;
        let err = error_norm(&step.error, &y, &step.y_new, rtol, atol);

        if !err.is_finite() || !step.y_new.iter().all(|v| v.is_finite()) {
            traj.rejected_steps += 1;
            last_rejected = true;
            h *= 0.1;
            if h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::NonFinite { component: "state" });
            }
            continue;
        }

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let t_new = if last { horizon } else { t + h };
            check_negativity(&step.y_new, t_new)?;

            if next_sample < grid.len() {
                let segment = DenseSegment::new(t, h, &y, &step);
                while next_sample < grid.len() && grid[next_sample] <= t_new {
                    let ts = grid[next_sample];
                    if ts == t_new {
                        break;
                    }
                    let ys = segment.eval(ts);
                    check_negativity(&ys, ts)?;
                    traj.push(ts, &ys);
                    next_sample += 1;
                }
            }
            if next_sample < grid.len() && grid[next_sample] == t_new && t_new < horizon {
                traj.push(t_new, &step.y_new);
                next_sample += 1;
            } else if record_steps && t_new < horizon {
                traj.push(t_new, &step.y_new);
            }

            let fac = (fac11 / facold.powf(PI_BETA) / SAFETY).clamp(MAX_GROW, MAX_SHRINK);
            facold = err.max(1e-4);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;

            t = t_new;
            y = step.y_new;
            k1 = step.k[6];
            h = h_new.min(horizon);
        } else {
            traj.rejected_steps += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(MAX_SHRINK);
        }
    }

    traj.push(horizon, &y);
    Ok(traj)
}

/// Final augmented state `(S, I, P, N, J)` after `steps` equal Dormand–Prince
/// steps with no error control. For convergence-order studies.
pub fn fixed_step_final(
    params: &ModelParams,
    initial: &MarketState,
    horizon: f64,
    steps: usize,
) -> Result<[f64; DIM]> {
    params.validate()?;
    initial.validate()?;
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidScenario(
            "fixed-step run needs steps > 0 and horizon > 0".into(),
        ));
    }
    let h = horizon / steps as f64;
    let mut y: State = [initial.s, initial.i, initial.p, initial.n, 0.0];
    let mut k1 = augmented_rhs(params, &y);
    for _ in 0..steps {
        let step = dopri_step(params, &y, &k1, h);
        y = step.y_new;
        k1 = step.k[6];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equilibrium, ParamName};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn disease_free_market_grows_linearly() {
        let params = ModelParams::default().with(ParamName::Mu, 0.5);
        let scenario = Scenario::new(MarketState::new(20.0, 0.0, 0.0, 0.0), 50.0);
        let grid = interior_grid(50.0, 49);
        let traj = integrate(&params, &scenario, Some(&grid)).unwrap();
        assert_eq!(traj.len(), 51);
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x.s - (20.0 + 0.5 * t)).abs() < 1e-10, "t={t} {x:?}");
            assert_eq!([x.i, x.p, x.n], [0.0; 3]);
        }
        assert!(traj.profit_running.iter().all(|&j| j == 0.0));
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let params = ModelParams::default();
        let eq = equilibrium(&params).unwrap();
        let scenario = Scenario::new(eq, 100.0);
        let traj = integrate(&params, &scenario, None).unwrap();
        for x in &traj.states {
            for (a, b) in x.to_array().iter().zip(eq.to_array()) {
                assert!(rel(*a, b) < scenario.rel_tol * 10.0);
            }
        }
        let expected = params.beta_p * eq.s * eq.p * 100.0;
        assert!(rel(traj.final_profit(), expected) < 1e-6);
        assert!((expected - 81.20).abs() < 5e-3);
    }

    #[test]
    fn reference_run_levels_off() {
        // slowest mode decays like exp(-0.0129 t); 0.1% needs t of about 800
        let params = ModelParams::default();
        let scenario = Scenario::new(MarketState::new(100.0, 1.0, 0.0, 0.0), 800.0);
        let end = integrate(&params, &scenario, None).unwrap().final_state();
        let eq = equilibrium(&params).unwrap();
        for (a, b) in end.to_array().iter().zip(eq.to_array()) {
            assert!(rel(*a, b) < 1e-3, "{end:?} vs {eq:?}");
        }
    }

    #[test]
    fn times_span_horizon_and_increase() {
        let traj = integrate(&ModelParams::default(), &Scenario::default(), None).unwrap();
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 100.0);
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        assert!(traj.profit_running.windows(2).all(|w| w[0] <= w[1]));
        assert!(traj.step_count >= traj.rejected_steps);
    }

    #[test]
    fn grid_endpoints_not_duplicated() {
        let grid = [0.0, 10.0, 50.0, 100.0];
        let traj = integrate(&ModelParams::default(), &Scenario::default(), Some(&grid)).unwrap();
        assert_eq!(traj.times, vec![0.0, 10.0, 50.0, 100.0]);
        let grid = [10.0, 50.0];
        let traj = integrate(&ModelParams::default(), &Scenario::default(), Some(&grid)).unwrap();
        assert_eq!(traj.times, vec![0.0, 10.0, 50.0, 100.0]);
    }

    #[test]
    fn dense_output_agrees_with_direct_stop() {
        let params = ModelParams::default();
        let sampled = integrate(&params, &Scenario::default(), Some(&[37.3])).unwrap();
        let direct = integrate(&params, &Scenario::default().with_horizon(37.3), None).unwrap();
        let a = sampled.states[1];
        let b = direct.final_state();
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            assert!(rel(*x, y) < 1e-6, "{a:?} vs {b:?}");
        }
        assert!(rel(sampled.profit_running[1], direct.final_profit()) < 1e-6);
    }

    #[test]
    fn bad_grids_rejected() {
        let s = Scenario::default();
        let p = ModelParams::default();
        assert!(matches!(
            integrate(&p, &s, Some(&[5.0, 5.0])),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            integrate(&p, &s, Some(&[-1.0])),
            Err(Error::InvalidGrid(_))
        ));
        assert!(matches!(
            integrate(&p, &s, Some(&[101.0])),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn step_budget_exhaustion_keeps_partial_trajectory() {
        let scenario = Scenario {
            max_steps: 5,
            ..Scenario::default()
        };
        match integrate(&ModelParams::default(), &scenario, None) {
            Err(Error::NonConvergence {
                partial,
                t_reached,
                max_steps,
            }) => {
                assert_eq!(max_steps, 5);
                assert!(t_reached > 0.0 && t_reached < 100.0);
                assert_eq!(*partial.times.last().unwrap(), t_reached);
                assert_eq!(partial.step_count, 5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn loose_tolerances_trip_negativity_check() {
        // stiff P-viscosity against a tiny P population
        let params = ModelParams {
            mu: 0.10290306684154013,
            delta_i: 0.0025230075181664935,
            delta_p: 0.9611715437201942,
            delta_n: 0.012491739023922288,
            beta_p: 0.026209151214896607,
            beta_n: 3.5731489324004273,
            alpha_p: 0.2020416311382682,
            alpha_n: 0.005797803365612116,
            gamma_p: 23.654043556223435,
            gamma_i: 3.4128748297289118,
        };
        let x0 = MarketState::new(
            0.2607869058931452,
            0.7692113533262019,
            0.0031426615652752087,
            0.020873142626978616,
        );
        let loose = Scenario::new(x0, 10.0).with_tolerances(1e-2, 1e-2);
        let out = integrate(&params, &loose, None);
        assert!(
            matches!(out, Err(Error::Negativity { component: "P", .. })),
            "{out:?}"
        );

        let tight = Scenario::new(x0, 10.0);
        let traj = integrate(&params, &tight, None).unwrap();
        assert!(traj.states.iter().all(|x| x.validate().is_ok()));
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let params = ModelParams::default();
        let x0 = MarketState::new(100.0, 1.0, 0.0, 0.0);
        let reference = fixed_step_final(&params, &x0, 40.0, 8192).unwrap();
        let err = |n| {
            let y = fixed_step_final(&params, &x0, 40.0, n).unwrap();
            (0..DIM)
                .map(|k| (y[k] - reference[k]).abs())
                .fold(0.0, f64::max)
        };
        // still slightly pre-asymptotic at these step sizes; round-off
        // dominates beyond 256 steps
        let order = (err(64) / err(128)).log2();
        assert!((4.5..7.0).contains(&order), "observed order {order}");
    }
}
