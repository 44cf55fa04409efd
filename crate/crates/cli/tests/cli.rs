use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polisum(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polisum"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("POLISUM_OUT")
        .output()
        .expect("spawn polisum")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(polisum(d.path(), &["--seed", "4", "solve"]).status.success());
    }
    let rel = "gridworld/solve/policy.json";
    assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
    let v = json(&a.path().join(rel));
    assert_eq!(v["canonical"].as_array().unwrap().len(), 81);
    assert_eq!(v["provenance"]["master_seed"], 4);
}

#[test]
fn hiv_il_extraction_gives_singletons() {
    let d = tempfile::tempdir().unwrap();
    let out = polisum(
        d.path(),
        &["--domain", "hiv", "--fqi-iters", "5", "--fqi-episodes", "4", "extract", "--model", "il", "--k", "12"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&d.path().join("hiv/extract/summary-il-k12.json"));
    let trajs = v["trajectories"].as_array().unwrap();
    assert_eq!(trajs.len(), 12);
    assert!(trajs.iter().all(|t| t.as_array().unwrap().len() == 1));
}

#[test]
fn extract_then_eval_round_trip() {
    let d = tempfile::tempdir().unwrap();
    assert!(polisum(d.path(), &["extract", "--model", "irl", "--k", "12", "--l", "3"]).status.success());
    let summary = d.path().join("gridworld/extract/summary-irl-k12.json");
    let out = polisum(d.path(), &["eval", "--model", "irl", "--summary", summary.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let score = json(&d.path().join("gridworld/eval/score-irl-from-irl-k12.json"));
    let acc = score["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn summary_from_another_domain_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    assert!(polisum(d.path(), &["extract", "--model", "il", "--k", "12"]).status.success());
    let summary = d.path().join("gridworld/extract/summary-il-k12.json");
    let out = polisum(
        d.path(),
        &["--domain", "pacman", "reconstruct", "--model", "il", "--summary", summary.to_str().unwrap()],
    );
    assert!(!out.status.success());
}

#[test]
fn off_grid_size_needs_opt_in() {
    let d = tempfile::tempdir().unwrap();
    let args = ["--restarts", "1", "sweep", "--sizes", "10", "--lengths", "2", "--kernels", "rbf:1.0"];
    let refused = polisum(d.path(), &args);
    assert_eq!(refused.status.code(), Some(1));
    let mut allowed = vec!["--allow-off-grid"];
    allowed.extend(args);
    assert!(polisum(d.path(), &allowed).status.success());
    let rows = fs::read_to_string(d.path().join("gridworld/sweep/rows.csv")).unwrap();
    assert!(rows.starts_with("# config_hash="));
    // 2 methods + 2 baselines, one size, one restart.
    assert_eq!(rows.lines().count(), 2 + 4);
}

#[test]
fn sequential_and_parallel_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(polisum(a.path(), &["--restarts", "3", "cross-matrix"]).status.success());
    assert!(polisum(b.path(), &["--restarts", "3", "--sequential", "cross-matrix"]).status.success());
    let rel = "gridworld/cross-matrix/matrix.csv";
    assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
    assert!(a.path().join("gridworld/cross-matrix/heatmap.svg").exists());
}
