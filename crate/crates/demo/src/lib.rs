//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers or a JSON string and returns a
//! JSON string; errors come back as JS exceptions carrying the message.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use sema_adam::diagnostics::{DiagnosticCounts, StepRecord};
use sema_adam::harness::{divergence_path, DivergenceConfig, RunConfig};
use sema_adam::optimizer::ScalingBounds;
use sema_adam::schedules::{theorem2_budget, ScheduleInputs, Theorem3Schedule, TheoremBudget};

/// Longest run the page will simulate in one call.
pub const MAX_STEPS: u64 = 200_000;

#[derive(Debug, Default, Serialize)]
pub struct Series {
    pub t: Vec<u64>,
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    pub grad_norm_sq: Vec<f64>,
    pub run_avg_grad: Vec<f64>,
    pub run_avg_delta: Vec<f64>,
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
}

impl Series {
    fn push(&mut self, r: &StepRecord) {
        self.t.push(r.t);
        self.f.push(r.f_x);
        self.grad_norm_sq.push(r.grad_norm_sq);
        self.run_avg_grad.push(r.run_avg_grad);
        self.run_avg_delta.push(r.run_avg_delta);
        self.s_min.push(r.s_min);
        self.s_max.push(r.s_max);
    }
}

#[derive(Debug, Serialize)]
pub struct TrajectoryReport {
    #[serde(rename = "T")]
    pub horizon: u64,
    /// Carries the full T the constant schedule asked for, before the step cap.
    pub budget: Option<TheoremBudget>,
    pub bounds: Option<ScalingBounds>,
    pub series: Series,
    pub diagnostics: DiagnosticCounts,
}

/// Runs one seed of a run config and returns about `points` evenly spaced records.
pub fn trajectory_report(
    config_json: &str,
    seed: u64,
    points: u64,
) -> Result<TrajectoryReport, String> {
    let mut config = RunConfig::from_json(config_json).map_err(|e| e.to_string())?;
    config.out = None;
    config.max_t = Some(config.max_t.unwrap_or(MAX_STEPS).min(MAX_STEPS));
    let exp = config.prepare().map_err(|e| e.to_string())?;
    let every = (exp.horizon / points.max(1)).max(1);
    let mut series = Series::default();
    let result = exp
        .run_seed(seed, false, |r| {
            if r.t % every == 0 || r.t == exp.horizon {
                series.push(r);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(TrajectoryReport {
        horizon: exp.horizon,
        budget: exp.budget,
        bounds: exp.bounds,
        series,
        diagnostics: result.diagnostics,
    })
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ScheduleQuery {
    pub sigma_sq: f64,
    pub c: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub l_f: f64,
    pub epsilon: f64,
    pub delta0: f64,
    pub delta_f: f64,
    pub t_max: u64,
    pub points: usize,
}

#[derive(Debug, Serialize)]
pub struct ScheduleReport {
    pub theorem2: Option<TheoremBudget>,
    pub theorem2_error: Option<String>,
    pub c1: f64,
    pub t: Vec<u64>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Constant budget for the target accuracy and the decreasing schedule on a log grid of t.
pub fn schedule_report(query: &ScheduleQuery) -> Result<ScheduleReport, String> {
    let bounds = ScalingBounds::new(query.c_l, query.c_u).map_err(|e| e.to_string())?;
    let inputs = ScheduleInputs::new(query.sigma_sq, query.c, bounds, query.l_f);
    let decreasing = Theorem3Schedule::new(inputs).map_err(|e| e.to_string())?;
    let (theorem2, theorem2_error) =
        match theorem2_budget(query.epsilon, inputs, query.delta0, query.delta_f) {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let t_max = query.t_max.max(1) as f64;
    let points = query.points.max(2);
    let mut t: Vec<u64> = (0..points)
        .map(|i| (t_max.ln() * i as f64 / (points - 1) as f64).exp().round() as u64 - 1)
        .collect();
    t.dedup();
    let (beta, eta) = t.iter().map(|&t| decreasing.at(t)).unzip();
    Ok(ScheduleReport {
        theorem2,
        theorem2_error,
        c1: decreasing.c1(),
        t,
        beta,
        eta,
    })
}

#[derive(Debug, Serialize)]
pub struct DivergenceTrace {
    pub expected_gradient: f64,
    pub every: u64,
    pub small: Vec<f64>,
    pub large: Vec<f64>,
}

pub fn divergence_trace(
    momentum_small: f64,
    momentum_large: f64,
    steps: u64,
    seed: u64,
    points: u64,
) -> Result<DivergenceTrace, String> {
    let cfg = DivergenceConfig {
        momentum_small,
        momentum_large,
        steps: steps.min(MAX_STEPS),
        ..Default::default()
    };
    let every = (cfg.steps / points.max(1)).max(1);
    let path = |m| divergence_path(&cfg, m, seed, every).map_err(|e| e.to_string());
    Ok(DivergenceTrace {
        expected_gradient: cfg.expected_gradient(),
        every,
        small: path(momentum_small)?,
        large: path(momentum_large)?,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn trajectory(config_json: &str, seed: u32, points: u32) -> Result<String, JsValue> {
    to_js(trajectory_report(config_json, seed.into(), points.into()))
}

#[wasm_bindgen]
pub fn schedules(query_json: &str) -> Result<String, JsValue> {
    let query: Result<ScheduleQuery, String> =
        serde_json::from_str(query_json).map_err(|e| e.to_string());
    to_js(query.and_then(|q| schedule_report(&q)))
}

#[wasm_bindgen]
pub fn divergence(
    momentum_small: f64,
    momentum_large: f64,
    steps: u32,
    seed: u32,
    points: u32,
) -> Result<String, JsValue> {
    to_js(divergence_trace(
        momentum_small,
        momentum_large,
        steps.into(),
        seed.into(),
        points.into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CURL: &str = r#"{"problem": {"name": "boundedcurl", "dim": 10},
        "oracle": {"name": "gaussian", "sigma": 1.0},
        "rule": {"name": "shb"},
        "schedule": {"kind": "theorem2"},
        "epsilon": 0.25}"#;

    #[test]
    fn trajectory_is_capped_and_thinned() {
        let r = trajectory_report(CURL, 0, 100).unwrap();
        assert_eq!(r.horizon, MAX_STEPS);
        assert_eq!(r.budget.unwrap().horizon, 737_280);
        assert_eq!(r.series.t.len(), 101);
        assert_eq!(*r.series.t.last().unwrap(), MAX_STEPS);
        assert_eq!(r.diagnostics.lemma3_failed, 0);
    }

    #[test]
    fn trajectory_reports_config_errors() {
        let err = trajectory_report(r#"{"problem": {"name": "nope"}}"#, 0, 10).unwrap_err();
        assert!(err.contains("config"), "{err}");
    }

    #[test]
    fn schedule_matches_library() {
        let q = ScheduleQuery {
            sigma_sq: 1.0,
            c: 1.0,
            c_l: 1.0,
            c_u: 1.0,
            l_f: 2.0,
            epsilon: 0.25,
            delta0: 1.0,
            delta_f: 10.0,
            t_max: 100_000,
            points: 50,
        };
        let r = schedule_report(&q).unwrap();
        assert_eq!(r.t[0], 0);
        assert_eq!(*r.t.last().unwrap(), 99_999);
        assert!(r.beta.windows(2).all(|w| w[1] <= w[0]));
        assert!((r.beta[0] - 0.125).abs() < 1e-15);
        assert!(r.theorem2.is_some());
    }

    #[test]
    fn divergence_paths_have_expected_signs() {
        let d = divergence_trace(0.0, 0.99, 50_000, 0, 500).unwrap();
        assert_eq!(d.every, 100);
        assert_eq!(d.small.len(), 501);
        assert!(*d.small.last().unwrap() > 0.0);
        assert!(*d.large.last().unwrap() < -0.5);
    }

    #[test]
    fn exported_functions_return_json() {
        let text = divergence(0.0, 0.9, 1000, 1, 10).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["small"].as_array().unwrap().len(), 11);
    }
}
