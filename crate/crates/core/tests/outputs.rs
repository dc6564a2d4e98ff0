use std::fs;

use sema_adam::harness::{self, RunConfig};
use sema_adam::Error;

fn config(out: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::from_json(
        r#"{"problem": {"name": "logistic", "dim": 5, "samples": 50, "seed": 1},
            "oracle": {"name": "minibatch", "batch": 4},
            "rule": {"name": "adamplus"},
            "schedule": {"kind": "theorem2"},
            "epsilon": 0.5,
            "seeds": [0, 1, 2],
            "max_t": 500}"#,
    )
    .unwrap();
    c.out = Some(out.to_path_buf());
    c
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn summary_is_recomputable_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let summary = harness::run(&cfg, true).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();

    let mut finals = Vec::new();
    for seed in &cfg.seeds {
        let csv = fs::read_to_string(dir.path().join(format!("seed_{seed}.csv"))).unwrap();
        let t = column(&csv, "t");
        assert_eq!(t.len() as u64, summary.horizon + 1);
        let g = column(&csv, "grad_norm_sq");
        let avg = column(&csv, "run_avg_grad");
        let delta = column(&csv, "delta_t");
        let avg_delta = column(&csv, "run_avg_delta");
        let n = g.len() as f64;
        let g_mean = g.iter().sum::<f64>() / n;
        let d_mean = delta.iter().sum::<f64>() / n;
        assert!((g_mean - avg[avg.len() - 1]).abs() <= 1e-12 * g_mean);
        assert!((d_mean - avg_delta[avg_delta.len() - 1]).abs() <= 1e-12 * d_mean);
        finals.push(g_mean);
    }
    let mean = finals.iter().sum::<f64>() / 3.0;
    let var = finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 2.0;
    let stderr = (var / 3.0).sqrt();
    let reported = &json["run_avg_grad"];
    assert!((reported["mean"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean);
    assert!((reported["stderr"].as_f64().unwrap() - stderr).abs() <= 1e-9 * stderr);
    assert_eq!(json["per_seed"].as_array().unwrap().len(), 3);
    assert!(json["budget"]["T"].as_u64().unwrap() >= 500);
}

#[test]
fn state_snapshot_matches_final_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let summary = harness::run(&cfg, true).unwrap();
    let text = fs::read_to_string(dir.path().join("seed_1.state.json")).unwrap();
    let state: sema_adam::OptimizerState = serde_json::from_str(&text).unwrap();
    assert_eq!(state, summary.per_seed[1].state);
    assert_eq!(state.t, summary.horizon + 1);
}

#[test]
fn exit_codes() {
    assert_eq!(Error::Config("x".into()).exit_code(), 2);
    assert_eq!(Error::Usage("x".into()).exit_code(), 2);
    let record = harness::run(
        &{
            let mut c = config(std::path::Path::new("/unused"));
            c.out = None;
            c.seeds = vec![0];
            c
        },
        true,
    )
    .unwrap()
    .per_seed[0]
        .last;
    let e = Error::Diagnostic {
        message: "x".into(),
        record: Box::new(record),
    };
    assert_eq!(e.exit_code(), 3);
}
