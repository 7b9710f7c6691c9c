use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-mss"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn consensus_file(dir: &Path, kappa: f64, rho_l: f64) -> PathBuf {
    write(
        dir,
        "problem.json",
        &format!(
            r#"{{"version": 1, "graph": {{"n": 3, "edges": [[1, 2], [2, 3]]}}, "dynamics": {{"kappa": {kappa}}},
                "analysis": "consensus", "interval": {{"rho_l": {rho_l}, "rho_u": 1.0}}}}"#
        ),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_feasible_certificate_reverifies() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 0.5, 0.1);
    let report = dir.path().join("report.json");
    let out = run(&["analyze", "--input", s(&input), "--json-out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["verdict"], "feasible");
    assert!(v.get("timings").is_none());

    let out = run(&["analyze", "--verify-only", s(&report)]);
    assert_eq!(code(&out), 0);
    let check: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check["passed"], true);
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 0.5, 0.1);
    let out = run(&["analyze", "--input", s(&input)]);
    let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["certificate"]["certificate"]["xtilde"]["data"][0] = serde_json::json!(-1.0);
    let cert = write(dir.path(), "bad.json", &v.to_string());
    assert_eq!(code(&run(&["analyze", "--verify-only", s(&cert)])), 1);
}

#[test]
fn analyze_infeasible_exit_code() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 1.0, 1.0);
    let out = run(&["analyze", "--input", s(&input)]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn malformed_inputs_exit_64() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"version\": 1, \"graph\": ");
    assert_eq!(code(&run(&["analyze", "--input", s(&bad)])), 64);
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"version": 1, "graph": {"n": 3, "edges": [[1, 2], [2, 3]]}, "dynamics": {"kappa": 0.5},
            "interval": {"rho_l": 0.1, "rho_u": 1.0}, "colour": "red"}"#,
    );
    assert_eq!(code(&run(&["analyze", "--input", s(&unknown)])), 64);
    assert_eq!(code(&run(&["analyze", "--input", "/nonexistent/problem.json"])), 64);
    assert_eq!(code(&run(&["fit", "--bogus-flag"])), 64);
    let tpm = write(dir.path(), "tpm.csv", "0.5,0.4\n0.5,0.5\n");
    assert_eq!(code(&run(&["fit", "--tpm", s(&tpm)])), 64);
    assert_eq!(code(&run(&["geometry", "--m", "2", "--rho-l", "0.9", "--rho-u", "0.1"])), 64);
}

#[test]
fn brute_reports_chain_and_cap() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 0.5, 0.5);
    let out = run(&["brute", "--input", s(&input)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["chain_consistent"], true);
    assert_eq!(v["decomposed"], "feasible");

    let big = write(
        dir.path(),
        "k5.json",
        r#"{"version": 1,
            "graph": {"n": 5, "edges": [[1,2],[1,3],[1,4],[1,5],[2,3],[2,4],[2,5],[3,4],[3,5],[4,5]]},
            "dynamics": {"nx": 1, "ad": [0.5], "ac": [-0.05]},
            "interval": {"rho_l": 0.2, "rho_u": 0.9}}"#,
    );
    assert_eq!(code(&run(&["brute", "--input", s(&big)])), 65);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 0.5, 0.5);
    let tpm = write(dir.path(), "tpm.csv", "0.25,0.25,0.25,0.25\n0.5,0,0,0.5\n0.1,0.2,0.3,0.4\n0,0,0,1\n");
    let args = |csv: &Path, json: &Path| -> Vec<String> {
        ["simulate", "--input", s(&input), "--tpm", s(&tpm), "--seed", "7", "--trials", "300", "--horizon", "40"]
            .iter()
            .map(|a| a.to_string())
            .chain(["--csv-out".into(), s(csv).into(), "--json-out".into(), s(json).into()])
            .collect()
    };
    let (c1, j1) = (dir.path().join("a.csv"), dir.path().join("a.json"));
    let (c2, j2) = (dir.path().join("b.csv"), dir.path().join("b.json"));
    assert_eq!(code(&bin().args(args(&c1, &j1)).output().unwrap()), 0);
    assert_eq!(code(&bin().args(args(&c2, &j2)).env("RAYON_NUM_THREADS", "1").output().unwrap()), 0);
    let csv = fs::read(&c1).unwrap();
    assert_eq!(csv, fs::read(&c2).unwrap());
    assert_eq!(fs::read(&j1).unwrap(), fs::read(&j2).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&j1).unwrap()).unwrap();
    assert!(v["initial"].as_f64().unwrap() > 0.0, "default start must carry disagreement");
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("k,mean,stderr\n"));
    assert_eq!(text.lines().count(), 42);
}

#[test]
fn analyze_output_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = consensus_file(dir.path(), 0.4, 0.2);
    let a = run(&["analyze", "--input", s(&input)]);
    let b = run(&["analyze", "--input", s(&input)]);
    assert_eq!(a.stdout, b.stdout);
    let timed = run(&["analyze", "--input", s(&input), "--timings"]);
    let v: serde_json::Value = serde_json::from_slice(&timed.stdout).unwrap();
    assert!(v["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fit_identity_needs_whole_interval() {
    let dir = TempDir::new().unwrap();
    let tpm = write(dir.path(), "eye.csv", "1,0\n0,1\n");
    let out = run(&["fit", "--tpm", s(&tpm)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["rho_l"].as_f64().unwrap().abs() < 1e-6);
    assert!((v["rho_u"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["feasible"], true);
    assert!(v.get("trace").is_none());

    let out = run(&["fit", "--tpm", s(&tpm), "--trace"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!v["trace"].as_array().unwrap().is_empty());
}

#[test]
fn geometry_reports_membership() {
    let out = run(&["geometry", "--m", "2", "--rho-l", "0.2", "--rho-u", "0.8", "--point", "0.5,0.5", "--vector", "1,0,0,0"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"][0]["membership"], "interior");
    assert_eq!(v["points"][1]["membership"], "outside");
    assert_eq!(code(&run(&["geometry", "--m", "2", "--rho-l", "0.2", "--rho-u", "0.8", "--point", "0.5"])), 64);
}
