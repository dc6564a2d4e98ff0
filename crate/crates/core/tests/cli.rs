use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sema_adam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sema-adam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"problem": {"name": "boundedcurl", "dim": 3},
            "oracle": {"name": "gaussian", "sigma": 0.5, "clamp": true},
            "rule": {"name": "amsgrad"},
            "schedule": {"kind": "manual", "beta": 0.2, "eta": 0.05},
            "max_t": 99}"#,
    );
    let out = dir.path().join("out");
    let o = sema_adam(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--seed",
        "5",
        "--thin",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in [4, 5] {
        let csv = fs::read_to_string(out.join(format!("seed_{seed}.csv"))).unwrap();
        // Header, t = 0, 10, ..., 90, and the final t = 99.
        assert_eq!(csv.lines().count(), 12);
        assert!(out.join(format!("seed_{seed}.state.json")).exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seeds"], serde_json::json!([4, 5]));
    assert_eq!(summary["T"], 99);
    assert_eq!(summary["diagnostics_passed"], true);
    assert!(summary["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"problem": {"name": "boundedcurl"}}"#,
        r#"{"problem": {"name": "boundedcurl"}, "oracle": {"name": "exact"},
            "rule": {"name": "shb"}, "schedule": {"kind": "manual", "beta": 0.5, "eta": 0.1}}"#,
        r#"{"problem": {"name": "quadratic"}, "oracle": {"name": "exact"},
            "rule": {"name": "adam"}, "schedule": {"kind": "theorem2"}, "epsilon": 0.1}"#,
        r#"{"problem": {"name": "boundedcurl"}, "oracle": {"name": "exact"},
            "rule": {"name": "shb"}, "schedule": {"kind": "manual", "beta": 0.5, "eta": 0.1},
            "max_t": 10, "typo": 1}"#,
        "not json",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let o = sema_adam(&["run", "--config", &cfg]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    let o = sema_adam(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn listing_commands() {
    let o = sema_adam(&["list-problems"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["quadratic", "boundedcurl", "logistic"] {
        assert!(text.contains(name));
    }
    let o = sema_adam(&["list-rules"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["shb", "adam", "amsgrad", "adafom", "adamplus", "adabound"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn divergence_and_lemma2_commands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("div.json");
    let o = sema_adam(&[
        "demo-divergence",
        "--seeds",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);

    let o = sema_adam(&["check-lemma2", "--trials", "10000"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 17);

    let o = sema_adam(&["check-lemma2", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
}
