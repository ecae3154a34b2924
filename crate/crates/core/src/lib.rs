//! Word-of-mouth marketing dynamics with positive and negative comments.
//!
//! A market of Susceptible, Infected, Positive and Negative individuals
//! (see [`model`]) is integrated over a campaign horizon while the expected
//! overall profit is accumulated alongside ([`solver`]). On top of that sit
//! steady-state detection and one-parameter studies ([`analysis`]) and
//! box-constrained profit maximization ([`optimize`]).

pub mod analysis;
pub mod error;
pub mod model;
pub mod optimize;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    equilibrium, jacobian, vector_field, Derivative, MarketState, ModelParams, ParamName, Scenario,
};
pub use solver::{integrate, profit, Trajectory};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
