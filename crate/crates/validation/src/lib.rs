//! Oracles that do not share code with the solver: quadrature, finite
//! differences and seeded random draws used by the acceptance suite.

use rand::Rng;
use sipns_core::{vector_field, MarketState, ModelParams, ParamName, Scenario};

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

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Log-uniform draw in `[lo, hi]`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

/// Every rate drawn log-uniformly from `[lo, hi]`.
pub fn random_params(rng: &mut impl Rng, lo: f64, hi: f64) -> ModelParams {
    let mut p = ModelParams::default();
    for name in ParamName::ALL {
        p.set(name, log_uniform(rng, lo, hi));
    }
    p
}

/// Reference rates each scaled by a log-uniform factor in `[1/2, 2]`, a
/// random initial market and horizon.
pub fn random_scenario(rng: &mut impl Rng) -> (ModelParams, Scenario) {
    let base = ModelParams::default();
    let mut p = base;
    for name in ParamName::ALL {
        p.set(name, base.get(name) * log_uniform(rng, 0.5, 2.0));
    }
    let x0 = MarketState::new(
        rng.gen_range(20.0..150.0),
        rng.gen_range(0.0..5.0),
        rng.gen_range(0.0..5.0),
        rng.gen_range(0.0..5.0),
    );
    (p, Scenario::new(x0, rng.gen_range(10.0..150.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.3).collect();
        let f: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&t, &f) - (9.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn fd_jacobian_matches_a_hand_entry() {
        let p = ModelParams::default();
        let x = MarketState::new(10.0, 2.0, 3.0, 4.0);
        let jac = fd_jacobian(&p, &x);
        // d(dN)/dI = alpha_N
        assert!((jac[3][1] - p.alpha_n).abs() < 1e-8);
    }
}
