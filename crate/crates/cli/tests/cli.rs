use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evcec::evcec::build_evcec;
use evcec::instance::Instance;
use evcec::report::{from_csv, CSV_COLUMNS};
use serde_json::Value;
use tempfile::TempDir;

fn evcec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcec"))
        .args(args)
        .env("EVCEC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny(dir: &TempDir, seed: u64) -> PathBuf {
    let out = dir.path().join(format!("tiny{seed}.json"));
    let o = evcec(&["generate", "--preset", "tiny", "--seed", &seed.to_string(), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn solve(instance: &Path, algo: &str, extra: &[&str]) -> (Output, Option<Value>) {
    let out = instance.with_extension(format!("{algo}.sol.json"));
    let mut args = vec!["solve", "--algo", algo, "--instance", path_str(instance), "--out", path_str(&out)];
    args.extend_from_slice(extra);
    let o = evcec(&args);
    let line = String::from_utf8_lossy(&o.stdout).lines().last().map(|l| serde_json::from_str(l).unwrap());
    (o, line)
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = evcec(&["generate", "--zones", "4", "--locations", "5", "--seed", "11", "--out", path_str(p)]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let inst = Instance::load(&a).unwrap();
    assert_eq!((inst.n_zones(), inst.n_locations()), (4, 5));
}

#[test]
fn small_preset_model_has_the_published_binary_count() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("s.json");
    let o = evcec(&["generate", "--preset", "small", "--mj", "10", "--seed", "7", "--out", path_str(&p)]);
    assert!(o.status.success());
    let model = build_evcec(&Instance::load(&p).unwrap()).unwrap();
    assert_eq!(model.num_binaries(), 1320);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    let zero = evcec(&["generate", "--zones", "0", "--locations", "3", "--out", path_str(&out)]);
    assert_eq!(zero.status.code(), Some(2));
    let clash = evcec(&["generate", "--preset", "tiny", "--zones", "3", "--out", path_str(&out)]);
    assert_eq!(clash.status.code(), Some(2));
    let missing = evcec(&["generate", "--out", path_str(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn heuristic_solve_writes_a_solution() {
    let dir = TempDir::new().unwrap();
    let inst = tiny(&dir, 1);
    let (o, line) = solve(&inst, "heuristic", &["--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = line.unwrap();
    assert_eq!(line["algo"], "heuristic");
    assert_eq!(line["service_ok"], true);
    let sol: Value = serde_json::from_str(&std::fs::read_to_string(inst.with_extension("heuristic.sol.json")).unwrap()).unwrap();
    assert_eq!(sol["seed"], 1);
    assert!((sol["objective"].as_f64().unwrap() - line["z"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn branch_and_price_matches_the_mip() {
    let dir = TempDir::new().unwrap();
    let inst = tiny(&dir, 3);
    let (mo, mip) = solve(&inst, "mip", &["--b", "1", "--gap-tol", "1e-9"]);
    let (bo, bp) = solve(&inst, "bp", &["--b", "1", "--gap-tol", "1e-9"]);
    assert!(mo.status.success() && bo.status.success());
    let (mip, bp) = (mip.unwrap(), bp.unwrap());
    assert_eq!(mip["status"], "optimal");
    assert_eq!(bp["status"], "optimal");
    let (zm, zb) = (mip["z"].as_f64().unwrap(), bp["z"].as_f64().unwrap());
    assert!((zm - zb).abs() <= 1e-6 * zm.abs(), "mip {zm} bp {zb}");
}

#[test]
fn approx_reports_its_lower_bound() {
    let dir = TempDir::new().unwrap();
    let inst = tiny(&dir, 4);
    let metrics = dir.path().join("m.csv");
    let (o, line) = solve(&inst, "approx", &["--metrics", path_str(&metrics)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = line.unwrap();
    let (z, lb) = (line["z"].as_f64().unwrap(), line["lb"].as_f64().unwrap());
    let gap = line["gap_lb"].as_f64().unwrap();
    assert!(lb <= z + 1e-9);
    assert!((0.0..1.0).contains(&gap));
    let rows = from_csv(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].lb, Some(lb));
}

#[test]
fn impossible_service_rate_maps_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let inst = tiny(&dir, 5);
    let (mip, _) = solve(&inst, "mip", &["--mu", "1e-6"]);
    assert_eq!(mip.status.code(), Some(2), "{}", String::from_utf8_lossy(&mip.stderr));
    let (heur, _) = solve(&inst, "heuristic", &["--mu", "1e-6"]);
    assert_eq!(heur.status.code(), Some(1));
    let (bad_alpha, _) = solve(&inst, "heuristic", &["--alpha", "1.5"]);
    assert_eq!(bad_alpha.status.code(), Some(1));
}

#[test]
fn benchmark_is_reproducible_without_times() {
    let dir = TempDir::new().unwrap();
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = evcec(&[
            "benchmark", "--preset", "tiny", "--instances", "2", "--b", "0,1", "--algos", "mip,heuristic,bp",
            "--time-limit", "120", "--omit-times", "--out-dir", path_str(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read_to_string(out.join("report.csv")).unwrap());
        assert!(out.join("report.txt").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let header: Vec<&str> = reports[0].lines().next().unwrap().split(',').collect();
    assert_eq!(header, CSV_COLUMNS);
    let rows = from_csv(&reports[0]).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in &rows {
        assert_eq!(r.t_s, 0.0);
        assert!(r.service_ok);
        let gap = r.gap.expect("every tiny cell has an exact reference");
        assert!(gap >= -1e-9, "{} {} gap {gap}", r.instance_id, r.algo);
    }
}
