use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{adam_step, OptimizerState, SecondMomentRule};
use crate::oracles::SeededRng;

/// The bounded stochastic linear problem on [−1, 1] where Adam without first-moment
/// averaging drifts to the wrong end.
///
/// Each draw is `+large` with probability `p` and −1 otherwise, so the expected
/// gradient p·large − (1 − p) is positive and the minimizer is −1. Iterates are
/// clipped back into [−1, 1] after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    pub momentum_small: f64,
    pub momentum_large: f64,
    pub large: f64,
    pub p: f64,
    pub eta: f64,
    pub beta2: f64,
    pub g0: f64,
    pub steps: u64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            momentum_small: 0.0,
            momentum_large: 0.99,
            large: 11.0,
            p: 0.1,
            eta: 0.002,
            beta2: 0.9,
            g0: 1e-8,
            steps: 50_000,
        }
    }
}

impl DivergenceConfig {
    pub fn expected_gradient(&self) -> f64 {
        self.p * self.large - (1.0 - self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub seed: u64,
    pub expected_gradient: f64,
    pub final_small: f64,
    pub final_large: f64,
}

/// Iterates of one clipped run, keeping x_0 and every `every`-th iterate after it
/// (the final iterate is always kept).
pub fn divergence_path(
    cfg: &DivergenceConfig,
    momentum: f64,
    seed: u64,
    every: u64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::usage(format!(
            "momentum must be in [0,1), got {momentum}"
        )));
    }
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::usage("p must be in (0,1)"));
    }
    let every = every.max(1);
    let rule = SecondMomentRule::adam(cfg.beta2, cfg.g0)?;
    let mut state = OptimizerState::new(&rule, &[0.0]);
    let mut rng = SeededRng::seed_from_u64(seed);
    let beta = 1.0 - momentum;
    let mut path = vec![0.0];
    for t in 1..=cfg.steps {
        let g = if rng.random::<f64>() < cfg.p {
            cfg.large
        } else {
            -1.0
        };
        adam_step(&rule, &mut state, beta, cfg.eta, &[g])?;
        state.x[0] = state.x[0].clamp(-1.0, 1.0);
        if t % every == 0 || t == cfg.steps {
            path.push(state.x[0]);
        }
    }
    Ok(path)
}

fn final_iterate(cfg: &DivergenceConfig, momentum: f64, seed: u64) -> Result<f64> {
    let path = divergence_path(cfg, momentum, seed, cfg.steps.max(1))?;
    Ok(*path.last().expect("path starts at x0"))
}

/// Runs the clipped problem with both momentum settings from x = 0 on the same draw sequence.
pub fn divergence_demo(cfg: &DivergenceConfig, seed: u64) -> Result<DivergenceReport> {
    Ok(DivergenceReport {
        seed,
        expected_gradient: cfg.expected_gradient(),
        final_small: final_iterate(cfg, cfg.momentum_small, seed)?,
        final_large: final_iterate(cfg, cfg.momentum_large, seed)?,
    })
}
