mod common;

use std::sync::Mutex;

use common::{ls_slope, rel_err};
use sipns_core::analysis::{log_grid, threshold_search, ThresholdOutcome};
use sipns_core::model::{ModelParams, ParamName, Scenario};
use sipns_core::optimize::{
    compass_search, maximize_profit, sensitivity, ControlBound, ControlSpec, SearchOptions,
    SENSITIVITY_TOL_FACTOR,
};
use sipns_core::solver::profit;

fn bound(parameter: ParamName, lower: f64, upper: f64) -> ControlBound {
    ControlBound {
        parameter,
        lower,
        upper,
    }
}

fn scan(spec: &ControlSpec, scenario: &Scenario, n: usize) -> f64 {
    let c = spec.controls[0];
    (0..n)
        .map(|k| {
            let v = c.lower + (c.upper - c.lower) * k as f64 / (n - 1) as f64;
            profit(&spec.fixed.with(c.parameter, v), scenario).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn sensitivity_signs_at_reference_point() {
    let g = sensitivity(&ModelParams::default(), &Scenario::default()).unwrap();
    let d = |n: ParamName| g.iter().find(|e| e.parameter == n).unwrap().derivative;
    assert!(d(ParamName::Mu) > 0.0);
    assert!(d(ParamName::BetaN) < 0.0);
    assert!(g.iter().all(|e| !e.one_sided));
    assert_eq!(g.len(), 10);
}

#[test]
fn sensitivity_matches_regression_slopes() {
    let params = ModelParams::default();
    let scenario = Scenario::default();
    let tight = scenario.with_tolerances(
        scenario.rel_tol / SENSITIVITY_TOL_FACTOR,
        scenario.abs_tol / SENSITIVITY_TOL_FACTOR,
    );
    let g = sensitivity(&params, &scenario).unwrap();
    for e in &g {
        let v = params.get(e.parameter);
        let xs: Vec<f64> = (-2..=2).map(|k| v * (1.0 + 1e-3 * k as f64)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| profit(&params.with(e.parameter, x), &tight).unwrap())
            .collect();
        let slope = ls_slope(&xs, &ys);
        assert!(
            rel_err(e.derivative, slope) < 1e-3,
            "{}: {} vs {}",
            e.parameter,
            e.derivative,
            slope
        );
    }
}

#[test]
fn monotone_box_goes_to_upper_bound() {
    let scenario = Scenario::default();
    let (lo, hi) = (0.005, 0.03);
    // profit rises across the whole box
    let grid: Vec<f64> = (0..17).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    let js: Vec<f64> = grid
        .iter()
        .map(|&b| profit(&ModelParams::default().with(ParamName::BetaP, b), &scenario).unwrap())
        .collect();
    assert!(js.windows(2).all(|w| w[1] > w[0]));

    let spec = ControlSpec::new(
        ModelParams::default(),
        vec![bound(ParamName::BetaP, lo, hi)],
    );
    let r = maximize_profit(&spec, &scenario, 8, 42).unwrap();
    assert!((r.best_controls[0].value - hi).abs() <= 1e-6 * (hi - lo));
    assert!(r.converged);
}

#[test]
fn p_viscosity_optimum_agrees_with_threshold() {
    let scenario = Scenario::default();
    let (lo, hi) = (1e-3, 10.0);
    let t = threshold_search(&ModelParams::default(), &scenario, lo, hi).unwrap();
    let ThresholdOutcome::Interior { theta, bracket, .. } = t.outcome else {
        panic!("{:?}", t.outcome)
    };
    let spec = ControlSpec::new(
        ModelParams::default(),
        vec![bound(ParamName::GammaP, lo, hi)],
    );
    let r = maximize_profit(&spec, &scenario, 8, 1).unwrap();
    let width = bracket.1 - bracket.0;
    assert!(
        (r.best_controls[0].value - theta).abs() <= width,
        "{} vs {theta}",
        r.best_controls[0].value
    );
}

#[test]
fn two_monotone_controls_reach_corner() {
    let scenario = Scenario::default();
    let controls = vec![
        bound(ParamName::Mu, 0.5, 2.0),
        bound(ParamName::BetaP, 0.005, 0.03),
    ];
    let spec = ControlSpec::new(ModelParams::default(), controls.clone());

    // 17 x 17 grid oracle: the upper-right corner wins
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for a in 0..17 {
        for b in 0..17 {
            let p = spec.params_at(&[a as f64 / 16.0, b as f64 / 16.0]);
            let j = profit(&p, &scenario).unwrap();
            if j > best.0 {
                best = (j, a, b);
            }
        }
    }
    assert_eq!((best.1, best.2), (16, 16));

    let r = maximize_profit(&spec, &scenario, 8, 9).unwrap();
    for (v, c) in r.best_controls.iter().zip(&controls) {
        assert!((v.value - c.upper).abs() <= 1e-6 * (c.upper - c.lower));
    }
    assert!(r.best_profit >= best.0);
}

#[test]
fn one_dimensional_never_worse_than_grid_scan() {
    let scenario = Scenario::default();
    let boxes = [
        bound(ParamName::GammaP, 1e-3, 10.0),
        bound(ParamName::GammaP, 0.005, 0.05),
        bound(ParamName::AlphaN, 0.02, 0.5),
        bound(ParamName::DeltaP, 0.0, 0.2),
        bound(ParamName::GammaI, 0.01, 1.0),
    ];
    for b in boxes {
        let spec = ControlSpec::new(ModelParams::default(), vec![b]);
        let r = maximize_profit(&spec, &scenario, 8, 3).unwrap();
        let grid_best = scan(&spec, &scenario, 9);
        assert!(
            r.best_profit >= grid_best,
            "{}: {} < {grid_best}",
            b.parameter,
            r.best_profit
        );
    }
}

#[test]
fn seeded_runs_repeat_exactly() {
    let spec = ControlSpec::new(
        ModelParams::default(),
        vec![
            bound(ParamName::GammaP, 1e-3, 1.0),
            bound(ParamName::AlphaP, 0.05, 0.5),
        ],
    );
    let scenario = Scenario::default();
    let a = maximize_profit(&spec, &scenario, 4, 77).unwrap();
    let b = maximize_profit(&spec, &scenario, 4, 77).unwrap();
    assert_eq!(a, b);
    let c = maximize_profit(&spec, &scenario, 4, 78).unwrap();
    assert_ne!(a.starts[0].initial, c.starts[0].initial);
}

#[test]
fn result_dominates_traces_and_incumbents_never_drop() {
    let spec = ControlSpec::new(
        ModelParams::default(),
        vec![
            bound(ParamName::GammaP, 1e-3, 1.0),
            bound(ParamName::BetaN, 0.001, 0.05),
        ],
    );
    let r = maximize_profit(&spec, &Scenario::default(), 6, 5).unwrap();
    assert_eq!(r.starts.len(), 6);
    for t in &r.starts {
        assert!(r.best_profit >= t.best_profit);
        assert!(t.incumbent.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*t.incumbent.last().unwrap(), t.best_profit);
    }
    assert_eq!(
        r.evaluations,
        r.starts.iter().map(|t| t.evaluations).sum::<usize>()
    );
}

#[test]
fn every_evaluated_point_is_feasible() {
    let spec = ControlSpec::new(
        ModelParams::default(),
        vec![
            bound(ParamName::GammaP, 1e-3, 1.0),
            bound(ParamName::DeltaI, 0.0, 0.3),
        ],
    );
    let scenario = Scenario::default();
    let seen = Mutex::new(Vec::new());
    let objective = |u: &[f64]| {
        let p = spec.params_at(u);
        seen.lock().unwrap().push(p);
        profit(&p, &scenario)
    };
    compass_search(objective, &[0.99, 0.01], &SearchOptions::default());
    let seen = seen.into_inner().unwrap();
    assert!(seen.len() > 10);
    for p in seen {
        assert!(p.validate().is_ok());
        assert!((1e-3..=1.0).contains(&p.gamma_p));
        assert!((0.0..=0.3).contains(&p.delta_i));
    }
}

#[test]
fn coarse_log_grid_is_log_spaced() {
    let g = log_grid(1e-3, 10.0, 5);
    assert!((g[1] - 1e-2).abs() < 1e-15 && (g[3] - 1.0).abs() < 1e-12);
}
