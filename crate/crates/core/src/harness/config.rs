use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{scaling_bounds, Init, ScalingBounds, SecondMomentRule};
use crate::oracles::{Oracle, OracleConfig};
use crate::problems::{Problem, ProblemConfig};
use crate::schedules::{
    theorem2_budget, Schedule, ScheduleInputs, Theorem3Schedule, TheoremBudget,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleConfig {
    /// Constant (β, η, T) from the target accuracy.
    Theorem2,
    /// β_t ∝ 1/√(t+1); needs `max_t`.
    Theorem3,
    Manual {
        beta: f64,
        eta: f64,
    },
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_thin() -> u64 {
    1
}

/// A full experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub oracle: OracleConfig,
    pub rule: SecondMomentRule,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Caps T for theorem2 and sets it for the other schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_t: Option<u64>,
    #[serde(default)]
    pub init: Init,
    /// Overrides the default Δ_0 = σ²(1 + c‖∇F(x0)‖²).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    /// Write every N-th CSV row (the final row is always written).
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    /// Builds every component and resolves the schedule and horizon.
    pub fn prepare(&self) -> Result<Experiment> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be >= 1"));
        }
        let problem = Arc::new(self.problem.build().map_err(as_config)?);
        let oracle = self.oracle.build(problem.clone()).map_err(as_config)?;
        self.rule.validate()?;
        let spec = oracle.spec();
        let declared = scaling_bounds(&self.rule, spec.g_inf, spec.g_two);

        let theorem = |what: &str| -> Result<(f64, ScheduleInputs)> {
            let eps = self
                .epsilon
                .ok_or_else(|| Error::config(format!("{what} schedule needs epsilon")))?;
            let bounds = match &declared {
                Ok(b) => *b,
                Err(e) => return Err(Error::config(format!("{what} schedule: {e}"))),
            };
            Ok((
                eps,
                ScheduleInputs::new(spec.sigma_sq, spec.c, bounds, problem.lipschitz()),
            ))
        };

        let (schedule, horizon, budget) = match &self.schedule {
            ScheduleConfig::Manual { beta, eta } => {
                if !(*beta > 0.0 && *beta <= 1.0 && *eta > 0.0 && eta.is_finite()) {
                    return Err(Error::config(format!(
                        "manual schedule needs beta in (0,1] and eta > 0, got ({beta}, {eta})"
                    )));
                }
                let horizon = self
                    .max_t
                    .ok_or_else(|| Error::config("manual schedule needs max_t"))?;
                (
                    Schedule::Constant {
                        beta: *beta,
                        eta: *eta,
                    },
                    horizon,
                    None,
                )
            }
            ScheduleConfig::Theorem2 => {
                let (eps, inputs) = theorem("theorem2")?;
                let delta0 = self
                    .delta0
                    .unwrap_or_else(|| default_delta0(&problem, &oracle));
                let budget =
                    theorem2_budget(eps, inputs, delta0, problem.delta_f()).map_err(as_config)?;
                let horizon = self.max_t.map_or(budget.horizon, |m| m.min(budget.horizon));
                (
                    Schedule::Constant {
                        beta: budget.beta,
                        eta: budget.eta,
                    },
                    horizon,
                    Some(budget),
                )
            }
            ScheduleConfig::Theorem3 => {
                let (_, inputs) = theorem("theorem3")?;
                let horizon = self
                    .max_t
                    .ok_or_else(|| Error::config("theorem3 schedule needs max_t"))?;
                let s = Theorem3Schedule::new(inputs).map_err(as_config)?;
                (Schedule::Decreasing(s), horizon, None)
            }
        };

        Ok(Experiment {
            config: self.clone(),
            problem,
            oracle,
            bounds: declared.ok(),
            schedule,
            horizon,
            budget,
        })
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Usage(m) => Error::Config(m),
        other => other,
    }
}

/// Δ_0 = σ²(1 + c‖∇F(x0)‖²), the variance bound at the start point.
pub fn default_delta0(problem: &Problem, oracle: &Oracle) -> f64 {
    let mut g = vec![0.0; problem.dim()];
    problem.grad_unchecked(problem.x0(), &mut g);
    oracle.spec().variance_bound(crate::vector::norm_sq(&g))
}

/// A validated, fully built experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub problem: Arc<Problem>,
    pub oracle: Oracle,
    /// Declared scaling bounds, when the rule/oracle pair has them.
    pub bounds: Option<ScalingBounds>,
    pub schedule: Schedule,
    /// Last iteration index T.
    pub horizon: u64,
    pub budget: Option<TheoremBudget>,
}
