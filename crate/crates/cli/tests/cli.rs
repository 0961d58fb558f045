use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use distatt::scenario::{paper_preset, Scenario};

const BIN: &str = env!("CARGO_BIN_EXE_distatt");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn distatt")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_missing_file_fails_on_stderr() {
    let o = run(&["simulate", "definitely-missing.json"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("definitely-missing.json"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn invalid_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&paper_preset().to_json()).unwrap();
    doc["graph"].as_object_mut().unwrap().remove("edges");
    let path = dir.path().join("bad.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = run(&["simulate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("graph.edges"));
}

#[test]
fn shipped_preset_matches_builtin() {
    let sc = Scenario::load(repo_file("scenarios/rotating_pyramid.json")).unwrap();
    assert_eq!(sc, paper_preset());
}

#[test]
fn shipped_scenarios_validate() {
    for entry in fs::read_dir(repo_file("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn gradcheck_exits_zero_and_prints_maximum() {
    let o = run(&["gradcheck", "--samples", "50", "--seed", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("max relative error:"));
    assert!(out.trim_end().ends_with("PASS"));
}

#[test]
fn check_params_passes_on_preset() {
    let o = run(&["check-params", repo_file("scenarios/rotating_pyramid.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("overall: PASS"));
}

#[test]
fn check_params_fails_on_oversized_delta() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&paper_preset().to_json()).unwrap();
    doc["params"]["explicit"]["delta"] = serde_json::json!(0.05);
    let path = dir.path().join("delta.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = run(&["check-params", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn check_bpe_certifies_rotating_pyramid() {
    let o = run(&["check-bpe", repo_file("scenarios/rotating_pyramid.json").to_str().unwrap(), "--window", "12", "--sample-dt", "0.01"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("largest passing mu"));
}

#[test]
fn replicate_paper_writes_both_observers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let o = run(&["replicate-paper", "--out", out.to_str().unwrap(), "--t-end", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("scenario.json").is_file());
    for obs in ["hybrid", "continuous"] {
        for f in ["timeseries.csv", "jumps.csv", "summary.json", "rbar.svg", "xi.svg", "ptilde.svg", "e_norm.svg"] {
            assert!(out.join(obs).join(f).is_file(), "{obs}/{f}");
        }
    }
    let jumps = fs::read_to_string(out.join("hybrid/jumps.csv")).unwrap();
    assert_eq!(jumps.lines().count(), 2);
    let cont = fs::read_to_string(out.join("continuous/jumps.csv")).unwrap();
    assert_eq!(cont.lines().count(), 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("hybrid/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["jump_count"], 1);
    assert_eq!(summary["t_end"], 0.2);
}

#[test]
fn simulate_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let scenario = repo_file("scenarios/rotating_pyramid.json");
    let o = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--observer",
        "continuous",
        "--dt",
        "0.002",
        "--t-end",
        "0.1",
        "--no-plots",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["observer"], "continuous");
    assert_eq!(summary["dt"], 0.002);
    assert_eq!(summary["steps"], 50);
    assert!(!out.join("rbar.svg").exists());
}

#[test]
fn simulate_several_scenarios_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let a = repo_file("scenarios/rotating_pyramid.json");
    let b = repo_file("scenarios/triangle_synthesized.json");
    let o = run(&[
        "simulate",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--t-end",
        "0.1",
        "--jobs",
        "2",
        "--no-plots",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("rotating-pyramid/summary.json").is_file());
    assert!(dir.path().join("triangle-synthesized/summary.json").is_file());
    let lines: Vec<_> = stdout(&o).lines().map(String::from).collect();
    assert!(lines[0].starts_with("rotating-pyramid") && lines[1].starts_with("triangle-synthesized"));
}

#[test]
fn bad_override_is_rejected() {
    let o = run(&["simulate", repo_file("scenarios/rotating_pyramid.json").to_str().unwrap(), "--dt", "-1"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}
