//! Multi-seed experiment runner, CSV traces and JSON summaries.
//!
//! Output layout under `out`:
//!
//! ```text
//! seed_<s>.csv          t,F,grad_norm_sq,delta_t,run_avg_grad,run_avg_delta,s_min,s_max,beta_t,eta_t
//! seed_<s>.state.json   final optimizer state
//! summary.json          config echo, budget, per-seed finals, cross-seed mean/stderr, diagnostics
//! ```

mod config;
mod divergence;
mod lemma2;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use serde::Serialize;

pub use config::{default_delta0, Experiment, RunConfig, ScheduleConfig};
pub use divergence::{divergence_demo, divergence_path, DivergenceConfig, DivergenceReport};
pub use lemma2::{lemma2_grid, Lemma2Cell};

use crate::diagnostics::{track, DiagnosticCounts, RunSpec, StepRecord};
use crate::error::{Error, Result};
use crate::optimizer::{OptimizerState, ScalingBounds};
use crate::oracles::{OracleSpec, SeededRng};
use crate::schedules::{Schedule, TheoremBudget};

/// Outcome of one seed.
#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(rename = "final")]
    pub last: StepRecord,
    pub diagnostics: DiagnosticCounts,
    #[serde(skip)]
    pub state: OptimizerState,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub oracle: OracleSpec,
    pub lipschitz: f64,
    pub delta_f: f64,
    pub scaling_bounds: Option<ScalingBounds>,
    pub budget: Option<TheoremBudget>,
    /// c_1 of the decreasing schedule, reported only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub per_seed: Vec<SeedResult>,
    pub run_avg_grad: MeanStderr,
    pub run_avg_delta: MeanStderr,
    pub diagnostics: DiagnosticCounts,
    pub diagnostics_passed: bool,
    pub wall_time_s: f64,
}

impl Experiment {
    fn run_spec(&self, strict: bool) -> RunSpec<'_> {
        RunSpec {
            oracle: &self.oracle,
            rule: &self.config.rule,
            schedule: self.schedule,
            bounds: self.bounds,
            init: self.config.init,
            horizon: self.horizon,
            strict,
        }
    }

    /// Runs one seed, streaming records to `sink`.
    pub fn run_seed(
        &self,
        seed: u64,
        strict: bool,
        mut sink: impl FnMut(&StepRecord) -> Result<()>,
    ) -> Result<SeedResult> {
        let mut traj = track(self.run_spec(strict), SeededRng::seed_from_u64(seed));
        for record in traj.by_ref() {
            sink(&record?)?;
        }
        let last = *traj
            .last_record()
            .ok_or_else(|| Error::usage("run produced no records"))?;
        Ok(SeedResult {
            seed,
            last,
            diagnostics: *traj.counts(),
            state: traj.state().clone(),
        })
    }

    /// Runs one seed and writes its CSV trace and final state under `dir`.
    pub fn run_seed_to_dir(&self, seed: u64, strict: bool, dir: &Path) -> Result<SeedResult> {
        let thin = self.config.thin;
        let horizon = self.horizon;
        let mut writer = csv::Writer::from_path(dir.join(format!("seed_{seed}.csv")))?;
        let result = self.run_seed(seed, strict, |r| {
            if r.t % thin == 0 || r.t == horizon {
                writer.serialize(r)?;
            }
            Ok(())
        });
        writer.flush()?;
        let result = result?;
        let state = serde_json::to_string_pretty(&result.state)?;
        fs::write(dir.join(format!("seed_{seed}.state.json")), state)?;
        Ok(result)
    }
}

/// Runs every seed of `config` (concurrently with the `parallel` feature) and
/// writes outputs when `config.out` is set.
///
/// With `strict`, the first pathwise diagnostic failure aborts its seed and
/// is returned as [`Error::Diagnostic`].
pub fn run(config: &RunConfig, strict: bool) -> Result<Summary> {
    let exp = config.prepare()?;
    let start = Instant::now();
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
    }
    let one = |seed: u64| match &config.out {
        Some(dir) => exp.run_seed_to_dir(seed, strict, dir),
        None => exp.run_seed(seed, strict, |_| Ok(())),
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<SeedResult>> = {
        use rayon::prelude::*;
        config.seeds.par_iter().map(|s| one(*s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<SeedResult>> = config.seeds.iter().map(|s| one(*s)).collect();

    let per_seed = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize(&exp, per_seed, start.elapsed().as_secs_f64());
    if let Some(dir) = &config.out {
        let mut f = fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        writeln!(f)?;
    }
    Ok(summary)
}

fn summarize(exp: &Experiment, per_seed: Vec<SeedResult>, wall_time_s: f64) -> Summary {
    let grads: Vec<f64> = per_seed.iter().map(|r| r.last.run_avg_grad).collect();
    let deltas: Vec<f64> = per_seed.iter().map(|r| r.last.run_avg_delta).collect();
    let mut diagnostics = DiagnosticCounts::default();
    for r in &per_seed {
        diagnostics.merge(&r.diagnostics);
    }
    Summary {
        config: exp.config.clone(),
        oracle: exp.oracle.spec(),
        lipschitz: exp.problem.lipschitz(),
        delta_f: exp.problem.delta_f(),
        scaling_bounds: exp.bounds,
        budget: exp.budget,
        c1: match exp.schedule {
            Schedule::Decreasing(s) => Some(s.c1()),
            Schedule::Constant { .. } => None,
        },
        horizon: exp.horizon,
        run_avg_grad: MeanStderr::of(&grads),
        run_avg_delta: MeanStderr::of(&deltas),
        diagnostics_passed: diagnostics.all_passed(),
        diagnostics,
        per_seed,
        wall_time_s,
    }
}
