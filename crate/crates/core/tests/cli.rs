use std::path::Path;
use std::process::{Command, Output};

use eigprox::cli::{AggregateRow, BenchRow};
use serde_json::Value;

fn eigprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigprox"))
        .args(args)
        .env_remove("EIGPROX_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path, name: &str, n: usize, m: usize, seed: u64) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_owned();
    let o = eigprox(&[
        "generate", "--n", &n.to_string(), "--m", &m.to_string(), "--seed", &seed.to_string(), "--out", &p,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    p
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_echoes_flags_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.inst");
    let o = eigprox(&[
        "generate", "--n", "100", "--m", "100", "--density", "0.1", "--seed", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("n = 100, m = 100, density = 0.1, seed = 1"), "{text}");
    assert!(text.contains("operator norm L ="));
    let bytes = std::fs::read(&out).unwrap();
    let header = std::str::from_utf8(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).unwrap();
    let h: Value = serde_json::from_str(header).unwrap();
    assert_eq!(h["magic"], "EIGPROX-INSTANCE");
    assert_eq!(h["n"], 100);
    assert_eq!(h["m"], 100);
    assert_eq!(h["density"], 0.1);
    assert_eq!(h["seed"], 1);
    assert_eq!(h["checksum"], "crc-64/xz");
}

#[test]
fn invalid_density_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.inst");
    let o = eigprox(&["generate", "--density", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    assert_eq!(code(&eigprox(&["generate", "--n", "abc", "--out", "x"])), 2);
    assert_eq!(code(&eigprox(&["frobnicate"])), 2);
}

#[test]
fn regeneration_gives_identical_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(generate(dir.path(), "a.inst", 40, 10, 7)).unwrap();
    let b = std::fs::read(generate(dir.path(), "b.inst", 40, 10, 7)).unwrap();
    assert_eq!(a[a.len() - 8..], b[b.len() - 8..]);
    assert_eq!(a, b);
    let c = std::fs::read(generate(dir.path(), "c.inst", 40, 10, 8)).unwrap();
    assert_ne!(a[a.len() - 8..], c[c.len() - 8..]);
}

#[test]
fn solve_writes_a_converged_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "s.inst", 30, 10, 2);
    let out = dir.path().join("r.json");
    let o = eigprox(&[
        "solve", "--instance", &inst, "--method", "smp", "--eps", "0.01", "--samples", "1", "--seed", "4", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["converged"], true);
    assert_eq!(r["gap_exact"], true);
    assert!(r["gap"].as_f64().unwrap() <= 0.01 * r["lipschitz"].as_f64().unwrap());
    assert_eq!(r["method"], "smp");
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "s.inst", 20, 5, 1);
    assert_eq!(code(&eigprox(&["solve", "--instance", &inst, "--method", "newton"])), 2);
    assert_eq!(code(&eigprox(&["solve", "--instance", "/nonexistent/x.inst"])), 1);
    let out = dir.path().join("r.json");
    let o = eigprox(&[
        "solve", "--instance", &inst, "--eps", "0.0001", "--max-iter", "50", "--gap-stride", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(report(&out)["converged"], false);
    assert_eq!(report(&out)["iterations"], 50);
}

#[test]
fn repeats_report_subruns() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "s.inst", 20, 5, 3);
    let out = dir.path().join("r.json");
    let o = eigprox(&[
        "solve", "--instance", &inst, "--eps", "0.02", "--repeats", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r = report(&out);
    let subs = r["subruns"].as_array().unwrap();
    assert_eq!(subs.len(), 3);
    let best = subs.iter().map(|s| s["objective"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert!(r["objective"].as_f64().unwrap() <= best + 1e-12);
}

#[test]
fn exact_oracle_costs_more_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "d.inst", 100, 100, 1);
    let mut per_iter = Vec::new();
    for method in ["smp", "mp"] {
        let out = dir.path().join(format!("{method}.json"));
        let o = eigprox(&[
            "solve", "--instance", &inst, "--method", method, "--max-iter", "200", "--no-dual", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 3);
        per_iter.push(report(&out)["per_iteration_s"].as_f64().unwrap());
    }
    assert!(per_iter[1] > per_iter[0], "smp {} s, mp {} s", per_iter[0], per_iter[1]);
}

#[test]
fn bench_writes_parseable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    let plan = serde_json::json!({
        "instances": [{"n": 12, "m": 4, "density": 0.4}],
        "methods": ["smp", "mp"],
        "seeds": [1, 2, 3],
        "samples": [1, 8],
        "output": runs,
        "solver": {"eps": 0.05}
    });
    let plan_path = dir.path().join("plan.json");
    std::fs::write(&plan_path, plan.to_string()).unwrap();
    let o = eigprox(&["bench", "--plan", plan_path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&runs).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["method", "n", "m", "nnz", "samples", "seed", "iterations", "wallclock_s", "per_iteration_s", "gap", "converged", "j_mean"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
    let rows: Vec<BenchRow> = eigprox::cli::read_csv(&runs).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.converged));
    // plan order: smp N=1 seeds 1..3, smp N=8, then mp
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [1, 2, 3, 1, 2, 3, 1, 2, 3]);
    let agg: Vec<AggregateRow> = eigprox::cli::read_csv(&dir.path().join("runs_aggregate.csv")).unwrap();
    assert_eq!(agg.len(), 3);
    for a in &agg {
        assert_eq!(a.runs, 3);
        assert!(a.iterations_ci_low <= a.iterations_mean && a.iterations_mean <= a.iterations_ci_high);
    }
}

#[test]
fn empty_bench_plan_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let plan = serde_json::json!({"instances": [{"n": 5, "m": 2}], "methods": [], "seeds": [1], "output": "x.csv"});
    std::fs::write(&plan_path, plan.to_string()).unwrap();
    assert_eq!(code(&eigprox(&["bench", "--plan", plan_path.to_str().unwrap()])), 2);
    assert_eq!(code(&eigprox(&["bench", "--plan", "/nonexistent/plan.json"])), 1);
}

#[test]
fn quick_verify_passes() {
    let o = eigprox(&["verify", "--quick"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    for suite in ["prox", "truncation", "oracle", "gap"] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(suite)), "{text}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn injected_prox_fault_fails_verify() {
    let o = eigprox(&["verify", "--quick", "--inject-fault", "prox-sign-flip"]);
    assert_ne!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("prox")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains("truncation")));
}

#[test]
fn thread_override_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_eigprox"))
        .args(["verify", "--quick"])
        .env("EIGPROX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_eigprox"))
        .args(["verify", "--quick"])
        .env("EIGPROX_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
