//! Adam-style optimizers driven by a stochastic moving-average gradient
//! estimator, with diagnostics that check the descent inequality, the
//! variance recursion and the scaling-factor bounds along every run.
//!
//! Modules:
//! - [`problems`]: smooth test objectives with known L_F and F_*
//! - [`oracles`]: unbiased gradient oracles with declared variance constants
//! - [`optimizer`]: moving-average update, the six second-moment rules, the generic step
//! - [`schedules`]: constant and decreasing (β_t, η_t) schedules with guarantees
//! - [`diagnostics`]: step records and pathwise/Monte Carlo checks
//! - [`harness`]: multi-seed runner, CSV/JSON output, divergence demo
//!
//! ```
//! use std::sync::Arc;
//! use rand::SeedableRng;
//! use sema_adam::{adam_step, Oracle, OptimizerState, Problem, SecondMomentRule, SeededRng};
//!
//! let problem = Arc::new(Problem::bounded_curl(10)?);
//! let oracle = Oracle::gaussian(problem.clone(), 1.0, Some(6.0))?;
//! let rule = SecondMomentRule::adam(0.01, 1.0)?;
//! let mut state = OptimizerState::new(&rule, problem.x0());
//! let mut rng = SeededRng::seed_from_u64(0);
//! for _ in 0..1000 {
//!     let g = oracle.sample(&state.x, &mut rng)?;
//!     adam_step(&rule, &mut state, 0.1, 0.01, &g)?;
//! }
//! assert!(problem.value(&state.x)? < problem.value(problem.x0())?);
//! # Ok::<(), sema_adam::Error>(())
//! ```

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod oracles;
pub mod problems;
pub mod schedules;
pub mod vector;

pub use error::{Error, Result};
pub use optimizer::{
    adam_step, scaling_bounds, sema_update, OptimizerState, RuleKind, ScalingBounds,
    SecondMomentRule,
};
pub use oracles::{Oracle, OracleSpec, SeededRng};
pub use problems::{builtin_problems, Problem};
pub use vector::RealVector;
