//! Step-size and averaging-weight schedules with convergence guarantees.
//!
//! [`theorem2_budget`] gives the constant pair (β, η) and horizon T that make
//! the averaged squared gradient norm at most ε² in expectation.
//! [`Theorem3Schedule`] gives the decreasing pair β_t ∝ 1/√(t+1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::ScalingBounds;

/// Relative slack for checks on quantities that were set at equality.
const EQUALITY_SLACK: f64 = 1e-12;

/// Inputs shared by both schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInputs {
    pub sigma_sq: f64,
    pub c: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub l_f: f64,
}

impl ScheduleInputs {
    pub fn new(sigma_sq: f64, c: f64, bounds: ScalingBounds, l_f: f64) -> Self {
        Self {
            sigma_sq,
            c,
            c_l: bounds.c_l,
            c_u: bounds.c_u,
            l_f,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma_sq >= 0.0
            && self.c > 0.0
            && self.c_l > 0.0
            && self.c_u >= self.c_l
            && self.l_f > 0.0
            && [self.sigma_sq, self.c, self.c_u, self.l_f]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("invalid schedule inputs {self:?}")))
        }
    }

    /// The η cap shared by both theorems: c_l/(2c_u²L_F).
    fn descent_cap(&self) -> f64 {
        self.c_l / (2.0 * self.c_u * self.c_u * self.l_f)
    }

    /// β√c_l/(2L_F√c_u³).
    fn tracking_cap(&self, beta: f64) -> f64 {
        beta * self.c_l.sqrt() / (2.0 * self.l_f * self.c_u.powi(3).sqrt())
    }

    /// Whether η satisfies η·L_F ≤ c_l/(2c_u²), the precondition of the descent inequality.
    pub fn descent_precondition(&self, eta: f64) -> bool {
        eta * self.l_f <= self.c_l / (2.0 * self.c_u * self.c_u) * (1.0 + EQUALITY_SLACK)
    }
}

/// Constant schedule and horizon for target accuracy ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBudget {
    pub beta: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub epsilon: f64,
    pub inputs: ScheduleInputs,
    pub delta0: f64,
    pub delta_f: f64,
}

/// β, η and T for the constant schedule.
///
/// β = min{ε²c_l/(12σ²c_u), c_l/(8σ²c·c_u), 1}; the middle term keeps
/// 2βσ²c ≤ c_l/(4c_u), which the guarantee relies on. η and T sit at their
/// bounds:
///
/// ```text
/// η = min{β√c_l/(2L_F√c_u³), 1/(√2·L_F·c_u), c_l/(2c_u²L_F)}
/// T = ⌈max{6Δ_0c_u/(βε²c_l), 12Δ_F/(ηε²c_l)}⌉
/// ```
pub fn theorem2_budget(
    epsilon: f64,
    inputs: ScheduleInputs,
    delta0: f64,
    delta_f: f64,
) -> Result<TheoremBudget> {
    inputs.validate()?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::usage(format!(
            "epsilon must be in (0,1], got {epsilon}"
        )));
    }
    if !(delta0 >= 0.0 && delta_f >= 0.0) {
        return Err(Error::usage("delta0 and delta_f must be non-negative"));
    }
    let ScheduleInputs {
        sigma_sq,
        c,
        c_l,
        c_u,
        l_f,
    } = inputs;
    let eps_sq = epsilon * epsilon;

    let beta = (eps_sq * c_l / (12.0 * sigma_sq * c_u))
        .min(c_l / (8.0 * sigma_sq * c * c_u))
        .min(1.0);
    let eta = inputs
        .tracking_cap(beta)
        .min(1.0 / (std::f64::consts::SQRT_2 * l_f * c_u))
        .min(inputs.descent_cap());
    let horizon =
        (6.0 * delta0 * c_u / (beta * eps_sq * c_l)).max(12.0 * delta_f / (eta * eps_sq * c_l));
    let budget = TheoremBudget {
        beta,
        eta,
        horizon: ceil_count(horizon),
        epsilon,
        inputs,
        delta0,
        delta_f,
    };
    budget.check()?;
    Ok(budget)
}

/// ⌈x⌉ as a count, ignoring rounding noise just above an integer.
fn ceil_count(x: f64) -> u64 {
    let r = x.round();
    let c = if (x - r).abs() <= EQUALITY_SLACK * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    c.max(1.0) as u64
}

impl TheoremBudget {
    /// Re-checks every defining inequality of the budget.
    pub fn check(&self) -> Result<()> {
        let ScheduleInputs {
            sigma_sq,
            c,
            c_l,
            c_u,
            l_f,
        } = self.inputs;
        let eps_sq = self.epsilon * self.epsilon;
        let tol = 1.0 + EQUALITY_SLACK;
        let t = self.horizon as f64;
        let conditions = [
            (
                "beta <= eps^2 c_l/(12 sigma^2 c_u)",
                self.beta * 12.0 * sigma_sq * c_u <= eps_sq * c_l * tol,
            ),
            (
                "2 beta sigma^2 c <= c_l/(4 c_u)",
                2.0 * self.beta * sigma_sq * c <= c_l / (4.0 * c_u) * tol,
            ),
            ("beta in (0,1]", self.beta > 0.0 && self.beta <= 1.0),
            (
                "eta <= tracking cap",
                self.eta <= self.inputs.tracking_cap(self.beta) * tol,
            ),
            (
                "eta <= 1/(sqrt2 L c_u)",
                self.eta * std::f64::consts::SQRT_2 * l_f * c_u <= tol,
            ),
            (
                "eta L <= c_l/(2 c_u^2)",
                self.inputs.descent_precondition(self.eta),
            ),
            (
                "T >= 6 D0 c_u/(beta eps^2 c_l)",
                t * tol >= 6.0 * self.delta0 * c_u / (self.beta * eps_sq * c_l),
            ),
            (
                "T >= 12 DF/(eta eps^2 c_l)",
                t * tol >= 12.0 * self.delta_f / (self.eta * eps_sq * c_l),
            ),
        ];
        match conditions.iter().find(|(_, ok)| !ok) {
            None => Ok(()),
            Some((name, _)) => Err(Error::config(format!("budget violates {name}: {self:?}"))),
        }
    }
}

/// Decreasing schedule β_t = c_l/(8σ²c·c_u√(t+1)) (capped at 1) with
///
/// ```text
/// η_t = min{β_t√c_l/(2L_F√c_u³), 1/(2L_F c_u), c_l/(2c_u²L_F)}
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Schedule {
    pub inputs: ScheduleInputs,
}

impl Theorem3Schedule {
    pub fn new(inputs: ScheduleInputs) -> Result<Self> {
        inputs.validate()?;
        Ok(Self { inputs })
    }

    pub fn at(&self, t: u64) -> (f64, f64) {
        let i = &self.inputs;
        let beta = (i.c_l / (8.0 * i.sigma_sq * i.c * i.c_u * ((t + 1) as f64).sqrt())).min(1.0);
        let eta = i
            .tracking_cap(beta)
            .min(1.0 / (2.0 * i.l_f * i.c_u))
            .min(i.descent_cap());
        (beta, eta)
    }

    /// c_1 = min(1, 1/(4cσ²)). Stated alongside the schedule but not used by it.
    pub fn c1(&self) -> f64 {
        (1.0 / (4.0 * self.inputs.c * self.inputs.sigma_sq)).min(1.0)
    }
}

/// (β_t, η_t) of the decreasing schedule at iteration `t`.
pub fn theorem3_schedule(t: u64, inputs: ScheduleInputs) -> Result<(f64, f64)> {
    Ok(Theorem3Schedule::new(inputs)?.at(t))
}

/// The (β_t, η_t) source of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant { beta: f64, eta: f64 },
    Decreasing(Theorem3Schedule),
}

impl Schedule {
    pub fn at(&self, t: u64) -> (f64, f64) {
        match self {
            Schedule::Constant { beta, eta } => (*beta, *eta),
            Schedule::Decreasing(s) => s.at(t),
        }
    }
}
