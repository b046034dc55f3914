use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bdmrf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdmrf"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("run bdmrf")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = bdmrf(dir, args);
    assert!(
        out.status.success(),
        "bdmrf {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_small_ising(dir: &Path) {
    ok(
        dir,
        &["preset", "--name", "ising-ising", "--out", "spec.json"],
    );
}

#[test]
fn simulate_is_reproducible_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_small_ising(d);
    ok(
        d,
        &[
            "--seed",
            "7",
            "simulate",
            "--spec",
            "spec.json",
            "--n",
            "50",
            "--out",
            "a.csv",
        ],
    );
    ok(
        d,
        &[
            "--seed",
            "7",
            "simulate",
            "--spec",
            "spec.json",
            "--n",
            "50",
            "--out",
            "b.csv",
        ],
    );
    ok(
        d,
        &[
            "--seed",
            "8",
            "simulate",
            "--spec",
            "spec.json",
            "--n",
            "50",
            "--out",
            "c.csv",
        ],
    );
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c.csv")).unwrap());
    let summary = json_file(&d.join("a.summary.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["seed"], 7);
    assert!(d.join("a.meta.json").exists());
}

#[test]
fn zero_rows_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_small_ising(dir.path());
    let out = bdmrf(
        dir.path(),
        &[
            "simulate",
            "--spec",
            "spec.json",
            "--n",
            "0",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn preset_lattice_simulates_to_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "preset",
            "--name",
            "poisson-mrf-ising-crf",
            "--out",
            "lat.json",
        ],
    );
    ok(
        d,
        &[
            "simulate",
            "--spec",
            "lat.json",
            "--n",
            "200",
            "--burn-in",
            "50",
            "--out",
            "lat.csv",
        ],
    );
    let text = fs::read_to_string(d.join("lat.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 201);
    assert!(lines.iter().all(|l| l.split(',').count() == 72));
}

#[test]
fn check_rejects_gaussian_poisson_block() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
  "format_version": "1.0",
  "nodes": [
    {"name": "g", "family": {"kind": "gaussian", "sigma": 1.0}, "block": 0},
    {"name": "c", "family": {"kind": "poisson"}, "block": 0}
  ],
  "blocks": [["g", "c"]],
  "block_dag": [[]],
  "intra_edges": [["g", "c"]],
  "inter_edges": [],
  "params": {"node": {"g": 0.0, "c": 0.0}, "intra": {"g--c": 0.1}, "inter": {}}
}"#;
    fs::write(dir.path().join("gp.json"), spec).unwrap();
    let out = bdmrf(dir.path(), &["check", "--spec", "gp.json"]);
    assert!(!out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["result"]["verdict"], "NotNormalizable");
    let sim = bdmrf(
        dir.path(),
        &[
            "simulate", "--spec", "gp.json", "--n", "5", "--out", "gp.csv",
        ],
    );
    assert!(!sim.status.success());
}

#[test]
fn oracle_on_small_ising() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["preset", "--name", "ising-2x2", "--out", "i.json"]);
    let v = stdout_json(&ok(d, &["oracle", "--spec", "i.json"]));
    assert_eq!(v["result"]["pass"], true);
    assert!(v["result"]["max_deviation"].as_f64().unwrap() < 1e-10);
    let v = stdout_json(&ok(
        d,
        &[
            "oracle",
            "--spec",
            "i.json",
            "--against",
            "gibbs",
            "--samples",
            "20000",
        ],
    ));
    assert!(v["result"]["tv"].as_f64().unwrap() < 0.02);
}

#[test]
fn oracle_refuses_continuous_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["preset", "--name", "gaussian-chain", "--out", "g.json"],
    );
    let out = bdmrf(d, &["oracle", "--spec", "g.json"]);
    assert!(!out.status.success());
    let v = stdout_json(&out);
    assert!(v["error"].as_str().unwrap().contains("enumer"), "{v}");
}

#[test]
fn experiment_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_small_ising(d);
    let manifest = r#"{
  "format_version": "1.0",
  "spec": "spec.json",
  "sampler": {"burn_in": 50},
  "n": [40, 80],
  "replicates": 2,
  "seed_base": 3,
  "grid": {"k": 6, "ratio": 0.05},
  "output": "out"
}"#;
    fs::write(d.join("m.json"), manifest).unwrap();
    ok(d, &["experiment", "--manifest", "m.json"]);
    for n in [40, 80] {
        for r in 0..2 {
            let run = d.join(format!("out/n{n}_rep{r}"));
            assert!(run.join("data.csv").exists(), "{}", run.display());
            assert!(run.join("roc.csv").exists());
        }
    }
    assert!(d.join("out/aggregate_roc.csv").exists());
    assert!(d.join("out/roc.svg").exists());
    let summary = json_file(&d.join("out/summary.json"));
    assert_eq!(summary["failures"], 0);
    assert_eq!(json_file(&d.join("out/run.summary.json"))["status"], "ok");
}

fn run_pipeline(d: &Path, threads: &str) {
    let t = ["--threads", threads];
    let run = |args: &[&str]| ok(d, &[&t[..], args].concat());
    run(&["preset", "--name", "ising-tpoisson", "--out", "s.json"]);
    run(&[
        "--seed", "11", "simulate", "--spec", "s.json", "--n", "150", "--out", "d.csv",
    ]);
    run(&[
        "fit", "--spec", "s.json", "--data", "d.csv", "--lambda", "0.05", "--out", "f.json",
    ]);
    run(&[
        "roc", "--truth", "s.json", "--data", "d.csv", "--k", "8", "--out", "r.csv",
    ]);
    run(&[
        "--seed",
        "11",
        "stars",
        "--spec",
        "s.json",
        "--data",
        "d.csv",
        "--k",
        "8",
        "--subsamples",
        "6",
        "--out",
        "st.json",
    ]);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    run_pipeline(one.path(), "1");
    run_pipeline(four.path(), "4");
    let mut names: Vec<_> = fs::read_dir(one.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    for name in names {
        let a = fs::read(one.path().join(&name)).unwrap();
        let b = fs::read(four.path().join(&name)).unwrap();
        assert!(a == b, "{name:?} differs between thread counts");
    }
}

#[test]
fn prepare_then_fit_and_stars() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["prepare", "--write-lookalike", "raw"]);
    ok(
        d,
        &[
            "prepare",
            "--aberrations",
            "raw/aberrations.csv",
            "--expression",
            "raw/expression.csv",
            "--top-variance",
            "0.05",
            "--out-data",
            "p.csv",
            "--out-spec",
            "p.json",
        ],
    );
    let report = json_file(&d.join("p.summary.json"));
    assert_eq!(report["status"], "ok");
    ok(
        d,
        &[
            "fit", "--spec", "p.json", "--data", "p.csv", "--lambda", "0.2", "--out", "pf.json",
        ],
    );
    ok(
        d,
        &[
            "stars",
            "--spec",
            "p.json",
            "--data",
            "p.csv",
            "--k",
            "6",
            "--subsamples",
            "5",
            "--out",
            "ps.json",
        ],
    );
    let fit = json_file(&d.join("ps.json"));
    assert_eq!(fit["format_version"], "1.0");
}

#[test]
fn malformed_spec_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        "{\"format_version\": \"1.0\",\n  \"nodes\": [,]}",
    )
    .unwrap();
    let out = bdmrf(dir.path(), &["check", "--spec", "bad.json"]);
    assert!(!out.status.success());
    let err = stdout_json(&out)["error"].as_str().unwrap().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn future_format_major_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_small_ising(d);
    let text = fs::read_to_string(d.join("spec.json"))
        .unwrap()
        .replace("\"1.0\"", "\"2.0\"");
    fs::write(d.join("v2.json"), text).unwrap();
    let out = bdmrf(d, &["check", "--spec", "v2.json"]);
    assert!(!out.status.success());
    assert!(stdout_json(&out)["error"].as_str().unwrap().contains("2.0"));
}
