//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use sipns_core::model::{vector_field, MarketState, ModelParams};

/// Composite trapezoid rule on samples `(t_k, f_k)`.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Central finite-difference Jacobian with step `1e-6 · max(1, |x_j|)`.
pub fn fd_jacobian(params: &ModelParams, state: &MarketState) -> [[f64; 4]; 4] {
    let x = state.to_array();
    let mut jac = [[0.0; 4]; 4];
    for j in 0..4 {
        let h = 1e-6 * x[j].abs().max(1.0);
        let (mut up, mut down) = (x, x);
        up[j] += h;
        down[j] -= h;
        let fu = vector_field(params, &MarketState::from_array(up))
            .unwrap()
            .to_array();
        let fd = vector_field(params, &MarketState::from_array(down))
            .unwrap()
            .to_array();
        for i in 0..4 {
            jac[i][j] = (fu[i] - fd[i]) / (up[j] - down[j]);
        }
    }
    jac
}

/// Least-squares slope through `(x_k, y_k)`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Log-uniform draw in `[lo, hi]`.
pub fn log_uniform(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

pub fn random_params(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> ModelParams {
    ModelParams {
        mu: log_uniform(rng, lo, hi),
        delta_i: log_uniform(rng, lo, hi),
        delta_p: log_uniform(rng, lo, hi),
        delta_n: log_uniform(rng, lo, hi),
        beta_p: log_uniform(rng, lo, hi),
        beta_n: log_uniform(rng, lo, hi),
        alpha_p: log_uniform(rng, lo, hi),
        alpha_n: log_uniform(rng, lo, hi),
        gamma_p: log_uniform(rng, lo, hi),
        gamma_i: log_uniform(rng, lo, hi),
    }
}
