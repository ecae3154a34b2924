use thiserror::Error;

use crate::solver::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParams {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid market state: component {component} = {value}")]
    InvalidState { component: &'static str, value: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("non-finite {component} while evaluating the vector field")]
    NonFinite { component: &'static str },

    #[error("parameter domain error: {0}")]
    ParameterDomain(String),

    /// The step budget ran out before reaching the horizon. The trajectory
    /// covers `[0, t_reached]`.
    #[error("integration did not reach the horizon within {max_steps} steps (stopped at t = {t_reached})")]
    NonConvergence {
        max_steps: usize,
        t_reached: f64,
        partial: Box<Trajectory>,
    },

    /// A state component dropped below the round-off floor. This usually
    /// means the tolerances are too loose for the rates in use.
    #[error("component {component} went negative ({value:e}) at t = {t}")]
    Negativity {
        component: &'static str,
        value: f64,
        t: f64,
    },

    #[error("unknown parameter name {0:?}")]
    UnknownParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid control spec: {0}")]
    InvalidControl(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::ParameterDomain(_)
                | Error::NonConvergence { .. }
                | Error::Negativity { .. }
        )
    }
}
