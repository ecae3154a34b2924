//! The four-compartment word-of-mouth market model.
//!
//! Individuals in the target market are Susceptible (inclined to buy),
//! Infected (recent buyer, no comment yet), Positive or Negative (recent
//! buyer who posted a positive / negative comment). Positive comments
//! trigger purchases, negative comments drive susceptibles out of the
//! market, and positive/infected individuals drift back to susceptible.
//!
//! All quantities here are population-level expected counts.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State components in canonical order. Every 4-vector and the Jacobian
/// use this layout.
pub const COMPONENTS: [&str; 4] = ["S", "I", "P", "N"];

/// Names of the ten rate constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "delta_I")]
    DeltaI,
    #[serde(rename = "delta_P")]
    DeltaP,
    #[serde(rename = "delta_N")]
    DeltaN,
    #[serde(rename = "beta_P")]
    BetaP,
    #[serde(rename = "beta_N")]
    BetaN,
    #[serde(rename = "alpha_P")]
    AlphaP,
    #[serde(rename = "alpha_N")]
    AlphaN,
    #[serde(rename = "gamma_P")]
    GammaP,
    #[serde(rename = "gamma_I")]
    GammaI,
}

impl ParamName {
    pub const ALL: [ParamName; 10] = [
        ParamName::Mu,
        ParamName::DeltaI,
        ParamName::DeltaP,
        ParamName::DeltaN,
        ParamName::BetaP,
        ParamName::BetaN,
        ParamName::AlphaP,
        ParamName::AlphaN,
        ParamName::GammaP,
        ParamName::GammaI,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Mu => "mu",
            ParamName::DeltaI => "delta_I",
            ParamName::DeltaP => "delta_P",
            ParamName::DeltaN => "delta_N",
            ParamName::BetaP => "beta_P",
            ParamName::BetaN => "beta_N",
            ParamName::AlphaP => "alpha_P",
            ParamName::AlphaN => "alpha_N",
            ParamName::GammaP => "gamma_P",
            ParamName::GammaI => "gamma_I",
        }
    }

    /// Whether zero is an admissible value. `mu`, `delta_I` and `delta_P`
    /// may vanish; everything else must be strictly positive.
    pub fn allows_zero(self) -> bool {
        matches!(self, ParamName::Mu | ParamName::DeltaI | ParamName::DeltaP)
    }

    /// Checks a single value against this parameter's domain.
    pub fn check(self, value: f64) -> Result<()> {
        let reason = if !value.is_finite() {
            Some("must be finite")
        } else if self.allows_zero() && value < 0.0 {
            Some("must be >= 0")
        } else if !self.allows_zero() && value <= 0.0 {
            Some("must be > 0")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidParams {
                name: self.as_str(),
                value,
                reason,
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

/// The ten rate constants of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Entrance rate: individuals entering the market per unit time.
    pub mu: f64,
    /// I-exit rate.
    #[serde(rename = "delta_I")]
    pub delta_i: f64,
    /// P-exit rate.
    #[serde(rename = "delta_P")]
    pub delta_p: f64,
    /// N-exit rate.
    #[serde(rename = "delta_N")]
    pub delta_n: f64,
    /// P-infection force: purchase rate per susceptible per positive individual.
    #[serde(rename = "beta_P")]
    pub beta_p: f64,
    /// N-infection force: exit rate per susceptible per negative individual.
    #[serde(rename = "beta_N")]
    pub beta_n: f64,
    /// P-comment rate.
    #[serde(rename = "alpha_P")]
    pub alpha_p: f64,
    /// N-comment rate.
    #[serde(rename = "alpha_N")]
    pub alpha_n: f64,
    /// P-viscosity rate (positive back to susceptible).
    #[serde(rename = "gamma_P")]
    pub gamma_p: f64,
    /// I-viscosity rate (infected back to susceptible).
    #[serde(rename = "gamma_I")]
    pub gamma_i: f64,
}

impl Default for ModelParams {
    /// The reference configuration shipped with the project.
    fn default() -> Self {
        ModelParams {
            mu: 1.0,
            delta_i: 0.05,
            delta_p: 0.05,
            delta_n: 0.1,
            beta_p: 0.01,
            beta_n: 0.01,
            alpha_p: 0.2,
            alpha_n: 0.1,
            gamma_p: 0.1,
            gamma_i: 0.1,
        }
    }
}

impl ModelParams {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Mu => self.mu,
            ParamName::DeltaI => self.delta_i,
            ParamName::DeltaP => self.delta_p,
            ParamName::DeltaN => self.delta_n,
            ParamName::BetaP => self.beta_p,
            ParamName::BetaN => self.beta_n,
            ParamName::AlphaP => self.alpha_p,
            ParamName::AlphaN => self.alpha_n,
            ParamName::GammaP => self.gamma_p,
            ParamName::GammaI => self.gamma_i,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let slot = match name {
            ParamName::Mu => &mut self.mu,
            ParamName::DeltaI => &mut self.delta_i,
            ParamName::DeltaP => &mut self.delta_p,
            ParamName::DeltaN => &mut self.delta_n,
            ParamName::BetaP => &mut self.beta_p,
            ParamName::BetaN => &mut self.beta_n,
            ParamName::AlphaP => &mut self.alpha_p,
            ParamName::AlphaN => &mut self.alpha_n,
            ParamName::GammaP => &mut self.gamma_p,
            ParamName::GammaI => &mut self.gamma_i,
        };
        *slot = value;
    }

    /// Copy with one rate replaced.
    pub fn with(mut self, name: ParamName, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        ParamName::ALL
            .into_iter()
            .try_for_each(|name| name.check(self.get(name)))
    }

    /// Total outflow rate of the infected compartment.
    fn infected_outflow(&self) -> f64 {
        self.alpha_p + self.alpha_n + self.gamma_i + self.delta_i
    }

    fn positive_outflow(&self) -> f64 {
        self.gamma_p + self.delta_p
    }
}

/// Expected counts of the four compartments at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketState {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "N")]
    pub n: f64,
}

/// Round-off allowance below zero before a component counts as negative.
pub const NEGATIVITY_FLOOR: f64 = -1e-9;

impl MarketState {
    pub fn new(s: f64, i: f64, p: f64, n: f64) -> Self {
        MarketState { s, i, p, n }
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        MarketState::new(x[0], x[1], x[2], x[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.s, self.i, self.p, self.n]
    }

    /// Market size `M = S + I + P + N`.
    pub fn total(&self) -> f64 {
        self.s + self.i + self.p + self.n
    }

    pub fn norm_inf(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        for (component, value) in COMPONENTS.iter().zip(self.to_array()) {
            if !value.is_finite() || value < NEGATIVITY_FLOOR {
                return Err(Error::InvalidState { component, value });
            }
        }
        Ok(())
    }

    /// Clamps round-off negatives (down to [`NEGATIVITY_FLOOR`]) to zero.
    pub fn clamped(&self) -> Self {
        MarketState::from_array(self.to_array().map(|v| v.max(0.0)))
    }
}

/// Time derivative of a [`MarketState`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    #[serde(rename = "dS")]
    pub ds: f64,
    #[serde(rename = "dI")]
    pub di: f64,
    #[serde(rename = "dP")]
    pub dp: f64,
    #[serde(rename = "dN")]
    pub dn: f64,
}

impl Derivative {
    pub fn to_array(&self) -> [f64; 4] {
        [self.ds, self.di, self.dp, self.dn]
    }

    pub fn norm_inf(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Initial state, campaign horizon `[0, T]` and integrator settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial: MarketState,
    pub horizon: f64,
    #[serde(default = "Scenario::default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "Scenario::default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "Scenario::default_max_steps")]
    pub max_steps: usize,
}

impl Default for Scenario {
    /// Initial market (100, 1, 0, 0) over a campaign of 100 time units.
    fn default() -> Self {
        Scenario::new(MarketState::new(100.0, 1.0, 0.0, 0.0), 100.0)
    }
}

impl Scenario {
    pub const DEFAULT_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_ABS_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

    fn default_rel_tol() -> f64 {
        Self::DEFAULT_REL_TOL
    }
    fn default_abs_tol() -> f64 {
        Self::DEFAULT_ABS_TOL
    }
    fn default_max_steps() -> usize {
        Self::DEFAULT_MAX_STEPS
    }

    /// Scenario with default tolerances and step budget.
    pub fn new(initial: MarketState, horizon: f64) -> Self {
        Scenario {
            initial,
            horizon,
            rel_tol: Self::DEFAULT_REL_TOL,
            abs_tol: Self::DEFAULT_ABS_TOL,
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_initial(mut self, initial: MarketState) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "horizon must be finite and > 0, got {}",
                self.horizon
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol.is_finite() && self.abs_tol > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "abs_tol must be finite and > 0, got {}",
                self.abs_tol
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidScenario("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Right-hand side on a raw 4-vector. No validation; used in the stepper.
#[inline]
pub(crate) fn rhs(params: &ModelParams, x: &[f64; 4]) -> [f64; 4] {
    let [s, i, p, n] = *x;
    let purchases = params.beta_p * p * s;
    [
        params.mu - purchases - params.beta_n * n * s + params.gamma_p * p + params.gamma_i * i,
        purchases - params.infected_outflow() * i,
        params.alpha_p * i - params.positive_outflow() * p,
        params.alpha_n * i - params.delta_n * n,
    ]
}

/// Evaluates the model's time derivative at `state`.
pub fn vector_field(params: &ModelParams, state: &MarketState) -> Result<Derivative> {
    let d = rhs(params, &state.to_array());
    if let Some(k) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: ["dS", "dI", "dP", "dN"][k],
        });
    }
    Ok(Derivative {
        ds: d[0],
        di: d[1],
        dp: d[2],
        dn: d[3],
    })
}

/// Closed-form interior equilibrium.
///
/// Setting the derivatives to zero gives
///
/// ```text
/// S* = (αP + αN + γI + δI)(γP + δP) / (βP αP)
/// I* = μ / (δI + αP δP / (γP + δP) + αN + βN αN S* / δN)
/// P* = αP I* / (γP + δP)
/// N* = αN I* / δN
/// ```
///
/// `S*` depends on neither `μ`, `δN` nor `βN`. With `μ = 0` the infected
/// compartments vanish and `S*` is still reported.
pub fn equilibrium(params: &ModelParams) -> Result<MarketState> {
    params.validate()?;
    let p = params;
    let positive_outflow = p.positive_outflow();
    let s = p.infected_outflow() * positive_outflow / (p.beta_p * p.alpha_p);
    let denom = p.delta_i
        + p.alpha_p * p.delta_p / positive_outflow
        + p.alpha_n
        + p.beta_n * p.alpha_n * s / p.delta_n;
    let i = p.mu / denom;
    let eq = MarketState::new(
        s,
        i,
        p.alpha_p * i / positive_outflow,
        p.alpha_n * i / p.delta_n,
    );
    if let Some((name, value)) = COMPONENTS
        .iter()
        .zip(eq.to_array())
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::ParameterDomain(format!(
            "equilibrium component {name} is {value}"
        )));
    }
    Ok(eq)
}

/// Analytic Jacobian of [`vector_field`], rows and columns in (S, I, P, N)
/// order.
pub fn jacobian(params: &ModelParams, state: &MarketState) -> [[f64; 4]; 4] {
    let p = params;
    let MarketState { s, p: pos, n, .. } = *state;
    [
        [
            -p.beta_p * pos - p.beta_n * n,
            p.gamma_i,
            -p.beta_p * s + p.gamma_p,
            -p.beta_n * s,
        ],
        [p.beta_p * pos, -p.infected_outflow(), p.beta_p * s, 0.0],
        [0.0, p.alpha_p, -p.positive_outflow(), 0.0],
        [0.0, p.alpha_n, 0.0, -p.delta_n],
    ]
}

/// Eigenvalues of a 4×4 matrix in state layout.
pub fn eigenvalues(matrix: &[[f64; 4]; 4]) -> Vec<Complex<f64>> {
    let m = Matrix4::from_fn(|r, c| matrix[r][c]);
    m.complex_eigenvalues().iter().copied().collect()
}

/// Whether every eigenvalue of the Jacobian at `state` has negative real part.
pub fn is_locally_stable(params: &ModelParams, state: &MarketState) -> bool {
    eigenvalues(&jacobian(params, state))
        .iter()
        .all(|z| z.re < 0.0)
}
