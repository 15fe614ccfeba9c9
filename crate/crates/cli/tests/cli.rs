use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crpo_core::envs::make_twostate;
use crpo_core::record::read_trace_csv;
use crpo_core::theorem_schedule;
use tempfile::TempDir;

macro_rules! fixture {
    ($name:literal) => {
        concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/", $name)
    };
}

fn crpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crpo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_twostate_reports_the_optimum() {
    let dir = TempDir::new().unwrap();
    let out = crpo(&[
        "solve",
        "--model",
        fixture!("twostate.json"),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sol = json(&dir.path().join("solution.json"));
    let j: Vec<f64> = serde_json::from_value(sol["j_star"].clone()).unwrap();
    assert!(
        (j[0] - 5.0).abs() < 1e-6 && (j[1] - 0.5).abs() < 1e-6,
        "{j:?}"
    );
    assert_eq!(sol["status"], "optimal");
}

#[test]
fn solve_exit_codes() {
    assert_eq!(
        code(&crpo(&["solve", "--model", fixture!("infeasible.json")])),
        2
    );
    let dir = TempDir::new().unwrap();
    let bad = write_config(&dir, "bad.json", "{\"num_states\": 2,");
    assert_eq!(code(&crpo(&["solve", "--model", p(&bad)])), 1);
    let mut model = make_twostate();
    model.transition[1][0] = vec![0.25, 0.25];
    let invalid = write_config(&dir, "invalid.json", &model.to_json().unwrap());
    let out = crpo(&["solve", "--model", p(&invalid)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("RowNotStochastic(1,0)"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&crpo(&["frobnicate"])), 1);
    assert_eq!(code(&crpo(&["run", "--algo", "crpo"])), 1);
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"t_max": 5, "alpha": 0.1, "eta": 0.5}"#);
    let out = dir.path().join("o");
    let args = [
        "run",
        "--algo",
        "pdo",
        "--model",
        fixture!("twostate.json"),
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&crpo(&args)), 1);
    let unknown = write_config(
        &dir,
        "u.json",
        r#"{"t_max": 5, "alpha": 0.1, "eta": 0.5, "gamma": 0.9}"#,
    );
    let args = [
        "run",
        "--algo",
        "crpo",
        "--model",
        fixture!("twostate.json"),
        "--config",
        p(&unknown),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&crpo(&args)), 1);
}

#[test]
fn theorem_schedule_run_meets_the_violation_contract() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture!("configs/crpo_twostate_theorem.json");
    let args = [
        "run",
        "--algo",
        "crpo",
        "--model",
        fixture!("twostate.json"),
        "--config",
        cfg,
        "--out",
        p(dir.path()),
    ];
    assert_eq!(code(&crpo(&args)), 0);
    let summary = json(&dir.path().join("summary.json"));
    let mut keys: Vec<_> = summary.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["final_avg_j", "first_feasible_iter", "n0_size", "seed"]
    );
    let eta = theorem_schedule(&make_twostate(), 3000, 0.1).eta;
    assert!(summary["final_avg_j"][1].as_f64().unwrap() <= 0.5 + eta + 0.05);
    let trace = read_trace_csv(&fs::read_to_string(dir.path().join("trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.len(), 3000);
    assert_eq!(
        summary["n0_size"].as_u64().unwrap() as usize,
        trace.iter().filter(|it| it.in_n0).count()
    );
}

#[test]
fn unconstrained_npg_reaches_the_unconstrained_optimum() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture!("configs/npg_twostate.json");
    let args = [
        "run",
        "--algo",
        "npg",
        "--model",
        fixture!("twostate.json"),
        "--config",
        cfg,
        "--out",
        p(dir.path()),
    ];
    assert_eq!(code(&crpo(&args)), 0);
    let j0 = json(&dir.path().join("summary.json"))["final_avg_j"][0]
        .as_f64()
        .unwrap();
    assert!((j0 - 10.0).abs() <= 0.3, "{j0}");
}

#[test]
fn empty_n0_exits_three_and_still_writes_the_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"t_max": 3, "alpha": 0.1, "eta": 0.0, "eval_mode": "exact"}"#,
    );
    let out = dir.path().join("o");
    let args = [
        "run",
        "--algo",
        "crpo",
        "--model",
        fixture!("twostate.json"),
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&crpo(&args)), 3);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(read_trace_csv(&trace).unwrap().len(), 3);
}

#[test]
fn pdo_trace_has_multiplier_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture!("configs/pdo_gridworld.json");
    let args = [
        "run",
        "--algo",
        "pdo",
        "--model",
        fixture!("gridworld.json"),
        "--config",
        cfg,
        "--out",
        p(dir.path()),
    ];
    assert_eq!(code(&crpo(&args)), 0);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,target,jbar_0,jbar_1,in_n0,exact_j_0,exact_j_1,lambda_1\n"));
}

#[test]
fn compare_needs_two_seeds() {
    let dir = TempDir::new().unwrap();
    let c = fixture!("configs/crpo_gridworld.json");
    let d = fixture!("configs/pdo_gridworld.json");
    let args = [
        "compare",
        "--model",
        fixture!("gridworld.json"),
        "--crpo-config",
        c,
        "--pdo-config",
        d,
        "--seeds",
        "3",
        "--out",
        p(dir.path()),
    ];
    assert_eq!(code(&crpo(&args)), 1);
}

#[test]
fn compare_writes_report_and_curves() {
    let dir = TempDir::new().unwrap();
    let c = fixture!("configs/crpo_gridworld.json");
    let d = fixture!("configs/pdo_gridworld.json");
    let args = [
        "compare",
        "--model",
        fixture!("gridworld.json"),
        "--crpo-config",
        c,
        "--pdo-config",
        d,
        "--seeds",
        "0,1",
        "--out",
        p(dir.path()),
    ];
    let out = crpo(&args);
    assert_eq!(code(&out), 0);
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["crpo"]["seeds"].as_array().unwrap().len(), 2);
    assert!(report["crpo_feasible_first"].is_boolean());
    for name in [
        "crpo_seed0.csv",
        "crpo_seed1.csv",
        "pdo_seed0.csv",
        "pdo_seed1.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

fn run_outputs(args: &[&str], dir: &Path, files: &[&str]) -> Vec<Vec<u8>> {
    assert_eq!(code(&crpo(args)), 0);
    files
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = fixture!("configs/crpo_twostate_td.json");
    let model = fixture!("twostate.json");
    let run = |d: &TempDir| {
        let args = [
            "run",
            "--algo",
            "crpo",
            "--model",
            model,
            "--config",
            cfg,
            "--out",
            p(d.path()),
            "--seed",
            "7",
        ];
        run_outputs(&args, d.path(), &["trace.csv", "summary.json"])
    };
    assert_eq!(run(&a), run(&b));
    let sweep = |d: &TempDir, jobs: &str| {
        let args = [
            "sweep",
            "--param",
            "alpha",
            "--values",
            "0.05,0.1",
            "--model",
            model,
            "--config",
            cfg,
            "--seeds",
            "0..3",
            "--out",
            p(d.path()),
            "--jobs",
            jobs,
        ];
        run_outputs(&args, d.path(), &["sweep.csv", "sweep.json"])
    };
    assert_eq!(sweep(&a, "1"), sweep(&b, "0"));
}

#[test]
fn eta_sweep_reports_robustness() {
    let dir = TempDir::new().unwrap();
    let cfg = fixture!("configs/crpo_gridworld.json");
    let args = [
        "sweep",
        "--param",
        "eta",
        "--model",
        fixture!("gridworld.json"),
        "--config",
        cfg,
        "--seeds",
        "0,1",
        "--out",
        p(dir.path()),
    ];
    assert_eq!(code(&crpo(&args)), 0);
    let report = json(&dir.path().join("sweep.json"));
    assert_eq!(report["values"].as_array().unwrap().len(), 5);
    assert!(report["robustness"].as_f64().unwrap() >= 0.0);
    let rows = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * 2);
    assert!(rows.starts_with("value,seed,final_j0,final_gap,final_violation\n"));
}
