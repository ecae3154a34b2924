mod common;

use common::{fd_jacobian, random_params};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sipns_core::model::{equilibrium, jacobian, vector_field, MarketState, ModelParams, ParamName};

fn rate() -> impl Strategy<Value = f64> {
    (-3.0f64..0.0).prop_map(|e| 10f64.powf(e))
}

prop_compose! {
    fn params()(v in proptest::array::uniform10(rate())) -> ModelParams {
        ModelParams {
            mu: v[0], delta_i: v[1], delta_p: v[2], delta_n: v[3], beta_p: v[4],
            beta_n: v[5], alpha_p: v[6], alpha_n: v[7], gamma_p: v[8], gamma_i: v[9],
        }
    }
}

prop_compose! {
    fn state()(x in proptest::array::uniform4(0.0f64..100.0)) -> MarketState {
        MarketState::from_array(x)
    }
}

proptest! {
    #[test]
    fn flow_balance(p in params(), x in state()) {
        let d = vector_field(&p, &x).unwrap();
        let total = d.ds + d.di + d.dp + d.dn;
        let balance = p.mu - p.delta_i * x.i - p.delta_p * x.p - p.delta_n * x.n - p.beta_n * x.n * x.s;
        let scale = p.mu + p.beta_p * x.p * x.s + p.beta_n * x.n * x.s + 10.0 * x.norm_inf();
        prop_assert!((total - balance).abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn equilibrium_residual(p in params()) {
        let eq = equilibrium(&p).unwrap();
        let r = vector_field(&p, &eq).unwrap().norm_inf();
        prop_assert!(r < 1e-10 * eq.norm_inf().max(1.0), "residual {r}");
        prop_assert!(eq.validate().is_ok());
    }

    #[test]
    fn susceptible_equilibrium_ignores_inflow_and_negative_channel(
        p in params(), mu in rate(), delta_n in rate(), beta_n in rate()
    ) {
        let s = equilibrium(&p).unwrap().s;
        for (name, v) in [(ParamName::Mu, mu), (ParamName::DeltaN, delta_n), (ParamName::BetaN, beta_n)] {
            prop_assert_eq!(equilibrium(&p.with(name, v)).unwrap().s.to_bits(), s.to_bits());
        }
    }

    #[test]
    fn infected_equilibrium_linear_in_inflow(p in params(), k in 0.1f64..10.0) {
        let a = equilibrium(&p).unwrap();
        let b = equilibrium(&p.with(ParamName::Mu, p.mu * k)).unwrap();
        for (x, y) in [(a.i, b.i), (a.p, b.p), (a.n, b.n)] {
            prop_assert!((y - k * x).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let p = random_params(&mut rng, 1e-3, 1.0);
        let x = MarketState::from_array(std::array::from_fn(|_| {
            rand::Rng::gen_range(&mut rng, 0.0..100.0)
        }));
        let an = jacobian(&p, &x);
        let fd = fd_jacobian(&p, &x);
        for i in 0..4 {
            for j in 0..4 {
                let tol = 1e-5 * an[i][j].abs();
                assert!(
                    (an[i][j] - fd[i][j]).abs() <= tol,
                    "({i},{j}) {} vs {}",
                    an[i][j],
                    fd[i][j]
                );
            }
        }
    }
}

#[test]
fn zero_inflow_keeps_susceptible_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p = random_params(&mut rng, 1e-3, 1.0);
        let z = equilibrium(&p.with(ParamName::Mu, 0.0)).unwrap();
        assert_eq!(z.s, equilibrium(&p).unwrap().s);
        assert_eq!([z.i, z.p, z.n], [0.0; 3]);
    }
}
