use std::sync::Arc;

use rand::SeedableRng;
use serde::Serialize;

use crate::diagnostics::{lemma2_mc_check, Lemma2Report, Lemma2Setup};
use crate::error::Result;
use crate::oracles::{Oracle, SeededRng};
use crate::problems::Problem;

pub const GRID_BETAS: [f64; 4] = [0.01, 0.1, 0.5, 1.0];
pub const GRID_LIPSCHITZ: [f64; 2] = [1.0, 10.0];
pub const GRID_NOISE: [f64; 2] = [0.0, 1.0];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma2Cell {
    pub beta: f64,
    pub lipschitz: f64,
    pub noise_var: f64,
    #[serde(flatten)]
    pub report: Lemma2Report,
}

/// Runs the variance-recursion check over β × L × noise.
///
/// The tracked map is h(x) = L·x, the gradient of (L/2)‖x‖², observed
/// through a Gaussian oracle of total variance `noise_var`.
pub fn lemma2_grid(trials: usize, seed: u64) -> Result<Vec<Lemma2Cell>> {
    let setup = |beta| Lemma2Setup {
        z: vec![0.5, -1.0, 2.0],
        x_prev: vec![0.2, 0.1, -0.3],
        x_cur: vec![0.25, 0.05, -0.2],
        beta,
    };
    let mut cells = Vec::new();
    let mut rng = SeededRng::seed_from_u64(seed);
    for &lipschitz in &GRID_LIPSCHITZ {
        let problem = Arc::new(Problem::quadratic_diag(vec![lipschitz; 3])?);
        for &noise_var in &GRID_NOISE {
            let oracle = Oracle::gaussian(problem.clone(), noise_var.sqrt(), None)?;
            for &beta in &GRID_BETAS {
                let h = |x: &[f64]| x.iter().map(|x| lipschitz * x).collect();
                let draw = |x: &[f64], r: &mut SeededRng| {
                    let mut out = vec![0.0; x.len()];
                    oracle.sample_into(x, r, &mut out);
                    out
                };
                let report = lemma2_mc_check(h, lipschitz, draw, &setup(beta), trials, &mut rng)?;
                cells.push(Lemma2Cell {
                    beta,
                    lipschitz,
                    noise_var,
                    report,
                });
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_passes() {
        let cells = lemma2_grid(10_000, 5).unwrap();
        assert_eq!(cells.len(), 16);
        for c in &cells {
            assert!(c.report.pass, "{c:?}");
        }
    }
}
