//! The run configuration: one JSON document holding the model, the
//! scenario and a block per command. Every block has defaults, so `{}` is a
//! valid config and resolves to the shipped default run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sipns_core::analysis::{decade_grid, log_grid, THRESHOLD_GRID_POINTS};
use sipns_core::optimize::{ControlBound, ControlSpec, DEFAULT_BUDGET_PER_START, DEFAULT_STARTS};
use sipns_core::{ModelParams, ParamName, Scenario};

use crate::CliError;

/// Interior trajectory samples written by `simulate` unless overridden.
pub const DEFAULT_SAMPLES: usize = 500;
/// Points in the default decade grid of `sweep`.
pub const DEFAULT_SWEEP_POINTS: usize = 9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ModelParams,
    pub scenario: Scenario,
    pub simulate: SimulateSpec,
    pub sweep: SweepSpec,
    /// Interior-maximum search in `gamma_P`; run by `profit`, and by `sweep`
    /// when the swept rate is `gamma_P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdSpec>,
    pub optimize: OptimizeSpec,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// Evenly spaced interior sample times; `t = 0` and `t = T` are always
    /// written as well.
    pub samples: usize,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        SimulateSpec {
            samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: ParamName,
    pub grid: GridSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            parameter: ParamName::BetaP,
            grid: GridSpec::Decade {
                points: DEFAULT_SWEEP_POINTS,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Log-spaced over one decade centred on the configured value.
    Decade {
        points: usize,
    },
    Log {
        lower: f64,
        upper: f64,
        points: usize,
    },
    Values(Vec<f64>),
}

impl GridSpec {
    pub fn resolve(&self, center: f64) -> Vec<f64> {
        match self {
            GridSpec::Decade { points } => decade_grid(center, *points),
            GridSpec::Log {
                lower,
                upper,
                points,
            } => log_grid(*lower, *upper, *points),
            GridSpec::Values(values) => values.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "default_threshold_points")]
    pub grid_points: usize,
}

fn default_threshold_points() -> usize {
    THRESHOLD_GRID_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub controls: Vec<ControlBound>,
    pub starts: usize,
    pub budget_per_start: usize,
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        OptimizeSpec {
            controls: vec![ControlBound {
                parameter: ParamName::BetaP,
                lower: 0.005,
                upper: 0.03,
            }],
            starts: DEFAULT_STARTS,
            budget_per_start: DEFAULT_BUDGET_PER_START,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn control_spec(&self) -> ControlSpec {
        ControlSpec::new(self.params, self.optimize.controls.clone())
    }

    pub fn sweep_grid(&self) -> Vec<f64> {
        self.sweep
            .grid
            .resolve(self.params.get(self.sweep.parameter))
    }

    /// Checks every block, whichever command will run.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.scenario.validate()?;

        match &self.sweep.grid {
            GridSpec::Decade { points } | GridSpec::Log { points, .. } if *points < 2 => {
                return Err(CliError::Config(
                    "sweep grid needs at least 2 points".into(),
                ));
            }
            GridSpec::Log { lower, upper, .. }
                if !(*lower > 0.0 && lower < upper && upper.is_finite()) =>
            {
                return Err(CliError::Config(format!(
                    "sweep log grid needs 0 < lower < upper, got [{lower}, {upper}]"
                )));
            }
            GridSpec::Values(values)
                if values.len() < 2 || values.windows(2).any(|w| w[1] <= w[0]) =>
            {
                return Err(CliError::Config(
                    "sweep grid needs at least 2 strictly increasing values".into(),
                ));
            }
            _ => {}
        }
        for value in self.sweep_grid() {
            self.sweep.parameter.check(value)?;
        }

        if let Some(t) = &self.threshold {
            if !(t.lower > 0.0 && t.lower < t.upper && t.upper.is_finite()) {
                return Err(CliError::Config(format!(
                    "threshold box needs 0 < lower < upper, got [{}, {}]",
                    t.lower, t.upper
                )));
            }
            if t.grid_points < 3 {
                return Err(CliError::Config(
                    "threshold grid needs at least 3 points".into(),
                ));
            }
        }

        self.control_spec().validate()?;
        if self.optimize.starts == 0 || self.optimize.budget_per_start == 0 {
            return Err(CliError::Config(
                "optimize needs at least one start and a positive budget".into(),
            ));
        }
        Ok(())
    }
}
