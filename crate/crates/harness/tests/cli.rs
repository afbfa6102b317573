use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resvpr_core::{EvalReport, MatchContext, PredictionRecord};
use resvpr_harness::PairScores;
use serde_json::{json, Value};

fn resvpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resvpr")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_category(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"]["category"].as_str().unwrap().to_string()
}

fn small(noise: f64) -> Value {
    json!({
        "synth": {"places": 30, "noise": noise, "drift": 0.3, "seed": 3, "dim": 16},
        "model": "NV-ESN",
        "reservoir": {"size": 120, "leakage": 0.5, "input_gain": 1.0},
        "train": {"learning_rate": 0.05, "batch_size": 10, "epochs": 30},
        "hidden": {"width": 40, "train": {"learning_rate": 0.05, "batch_size": 10, "epochs": 30}},
        "recall_at": [1, 5],
        "trials": 2,
        "seed": 9
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn bad_inputs_exit_nonzero_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = resvpr(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(4));
    assert_eq!(error_category(&missing), "io");

    let mut cfg = small(0.1);
    cfg["trials"] = json!(0);
    let p = write_config(dir.path(), "zero.json", &cfg);
    let out = resvpr(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_category(&out), "config");

    let out = resvpr(&["run", "--preset", "no_such_preset"]);
    assert!(!out.status.success());
    assert_eq!(error_category(&out), "config");

    let p = write_config(dir.path(), "ok.json", &small(0.1));
    let out = resvpr(&["run", "--config", p.to_str().unwrap(), "--model", "banana"]);
    assert_eq!(error_category(&out), "config");
}

#[test]
fn noiseless_synthetic_is_solved_by_descriptors_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0.0);
    cfg["hidden"]["train"] = json!({"learning_rate": 0.5, "batch_size": 5, "epochs": 60});
    let p = write_config(dir.path(), "c.json", &cfg);
    let v = stdout_json(&resvpr(&[
        "run",
        "--config",
        p.to_str().unwrap(),
        "--model",
        "NV",
        "--trials",
        "1",
    ]));
    assert_eq!(v["aggregates"][0]["accuracy"]["mean"], 1.0);
}

#[test]
fn run_writes_per_trial_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &small(0.1));
    let out = dir.path().join("out");
    let v = stdout_json(&resvpr(&[
        "run",
        "--config",
        p.to_str().unwrap(),
        "--model",
        "NV-SPARCE-ESN",
        "--trials",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(v["aggregates"][0]["trials"], 3);
    for t in 0..3 {
        let d = out.join(format!("trial_{t:03}")).join("NV-SPARCE-ESN");
        for f in ["report.json", "readout.bin", "reservoir.bin", "hidden.bin", "trace.csv"] {
            assert!(d.join(f).is_file(), "{t} {f}");
        }
        let rep = EvalReport::read_json(&d.join("report.json")).unwrap();
        assert!(rep.recall_at[&5] >= rep.recall_at[&1]);
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 + 2);
}

#[test]
fn excluding_validation_changes_the_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &small(0.3));
    let base = dir.path().join("a");
    let excl = dir.path().join("b");
    let args = |o: &Path| {
        vec![
            "run".to_string(),
            "--config".into(),
            p.to_str().unwrap().into(),
            "--trials".into(),
            "1".into(),
            "--out".into(),
            o.to_str().unwrap().into(),
        ]
    };
    let a: Vec<String> = args(&base);
    stdout_json(&resvpr(&a.iter().map(String::as_str).collect::<Vec<_>>()));
    let mut b = args(&excl);
    b.push("--exclude-validation-from-test".into());
    stdout_json(&resvpr(&b.iter().map(String::as_str).collect::<Vec<_>>()));
    let ra = EvalReport::read_json(&base.join("trial_000/NV-ESN/report.json")).unwrap();
    let rb = EvalReport::read_json(&excl.join("trial_000/NV-ESN/report.json")).unwrap();
    assert_eq!(ra.records.len(), 30);
    assert_eq!(rb.records.len(), 27);
    assert_eq!(rb.records[0].query, 3);
}

#[test]
fn grid_with_sabotaged_candidate_prefers_the_sane_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0.2);
    cfg["grid"] = json!({"learning_rate": [1000.0, 0.05]});
    let p = write_config(dir.path(), "g.json", &cfg);
    let out = dir.path().join("grid");
    let v = stdout_json(&resvpr(&[
        "grid",
        "--config",
        p.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(v["cells"], 2);
    assert_eq!(v["best"]["cell"]["learning_rate"], 0.05);
    assert!(out.join("grid.csv").is_file());
    let best: Value = serde_json::from_str(&fs::read_to_string(out.join("best_config.json")).unwrap()).unwrap();
    assert_eq!(best["train"]["learning_rate"], 0.05);
}

#[test]
fn sweep_rejects_more_starts_than_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0.1);
    cfg["sweep"] = json!({"starts": 500, "horizon": 10});
    let p = write_config(dir.path(), "s.json", &cfg);
    let out = resvpr(&["sweep-start", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());

    cfg["sweep"] = json!({"starts": 1, "horizon": 10});
    let p = write_config(dir.path(), "s1.json", &cfg);
    let v = stdout_json(&resvpr(&["sweep-start", "--config", p.to_str().unwrap()]));
    assert_eq!(v["starts"], 1);
    assert_eq!(v["horizon"], 10);
}

#[test]
fn holdout_zero_fraction_and_pairs_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(0.2);
    cfg["trials"] = json!(1);
    cfg["holdout"] = json!({"fraction": 0.0});
    let p = write_config(dir.path(), "h0.json", &cfg);
    let h0 = stdout_json(&resvpr(&["holdout", "--config", p.to_str().unwrap()]));
    let run = stdout_json(&resvpr(&["run", "--config", p.to_str().unwrap()]));
    assert_eq!(h0["accuracy"]["mean"], run["aggregates"][0]["accuracy"]["mean"]);

    cfg["holdout"] = json!({"fraction": 0.2, "mode": "pairs"});
    let p = write_config(dir.path(), "hp.json", &cfg);
    let v = stdout_json(&resvpr(&["holdout", "--config", p.to_str().unwrap()]));
    assert_eq!(v["mode"], "pairs");
    assert!(v["accuracy"]["mean"].as_f64().unwrap() <= 1.0);

    cfg["holdout"] = json!({"fraction": 1.0});
    let p = write_config(dir.path(), "h1.json", &cfg);
    assert!(!resvpr(&["holdout", "--config", p.to_str().unwrap()]).status.success());
}

#[test]
fn rerank_promotes_externally_preferred_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let scores = ndarray::array![0.9, 0.6, 0.1];
    let records = vec![
        PredictionRecord::from_scores(0, scores.view(), 3, 1).unwrap(),
        PredictionRecord::from_scores(1, scores.view(), 3, 0).unwrap(),
    ];
    let report = EvalReport::evaluate(records, &[1, 2], &MatchContext::frames(0.0)).unwrap();
    let rp = dir.path().join("report.json");
    report.write_json(&rp).unwrap();
    assert_eq!(report.accuracy, 0.5);
    let table = PairScores::from_pairs(vec![(0, 0, 0.1), (0, 1, 0.8), (1, 0, 0.9), (1, 1, 0.2)]).unwrap();
    let tp = dir.path().join("pairs.bin");
    table.write(&tp).unwrap();

    let mut cfg = small(0.0);
    cfg["rerank"] = json!({"scores": "pairs.bin", "report": "report.json", "k": 2});
    let p = write_config(dir.path(), "r.json", &cfg);
    let v = stdout_json(&resvpr(&["rerank", "--config", p.to_str().unwrap()]));
    assert_eq!(v["accuracy"], 1.0);
    let out = EvalReport::read_json(Path::new(v["report"].as_str().unwrap())).unwrap();
    assert_eq!(out.records[0].ranking[..2], [1, 0]);

    let short = PairScores::from_pairs(vec![(0, 0, 0.1)]).unwrap();
    short.write(&tp).unwrap();
    let out = resvpr(&["rerank", "--config", p.to_str().unwrap()]);
    assert_eq!(error_category(&out), "missing_score");
}

#[test]
fn synth_then_run_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut cfg = small(0.1);
    let v = stdout_json(&resvpr(&[
        "synth",
        "--config",
        write_config(dir.path(), "s.json", &cfg).to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]));
    assert_eq!(v["places"], 30);
    cfg.as_object_mut().unwrap().remove("synth");
    cfg["manifest"] = json!("data/manifest.json");
    cfg["trials"] = json!(1);
    let p = write_config(dir.path(), "m.json", &cfg);
    let v = stdout_json(&resvpr(&["run", "--config", p.to_str().unwrap(), "--seed", "4"]));
    assert!(v["aggregates"][0]["accuracy"]["mean"].as_f64().unwrap() > 0.5);
}

#[test]
fn preset_overlay_accepts_user_config() {
    let dir = tempfile::tempdir().unwrap();
    let overlay = json!({
        "synth": {"places": 20, "noise": 0.0, "drift": 0.0, "seed": 1, "dim": 8},
        "reservoir": {"size": 60},
        "hidden": {"width": 20, "train": {"epochs": 5}},
        "train": {"epochs": 5},
        "trials": 1
    });
    let p = write_config(dir.path(), "o.json", &overlay);
    let v = stdout_json(&resvpr(&[
        "run",
        "--preset",
        "gardens_nv_sparce_esn",
        "--config",
        p.to_str().unwrap(),
    ]));
    assert_eq!(v["aggregates"][0]["model"], "NV-SPARCE-ESN");
}
