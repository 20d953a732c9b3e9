use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn geoext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoext"))
        .args(args)
        .env("GEOEXT_LOG", "off")
        .output()
        .expect("spawn geoext")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn particle_classifies_phi_simple() {
    let o = geoext(&["classify", "--builtin", "particle", "--param", "rho=y"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "classify");
    assert_eq!(v["result"]["level"], "PHI_SIMPLE");
}

#[test]
fn r4math_config_reaches_measure_tier_only() {
    let cfg = configs().join("r4math.toml");
    let o = geoext(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["result"]["level"], "INVARIANT_MEASURE_ONLY");
    assert_eq!(v["result"]["tiers"]["iv"], true);
    assert_eq!(v["result"]["tiers"]["iii"], false);
}

#[test]
fn flat_config_is_top_tier() {
    let cfg = configs().join("flat.toml");
    let o = geoext(&["classify", "--config", cfg.to_str().unwrap(), "--markdown"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("GEODESIC_EXT_F0"));
}

#[test]
fn check_accepts_particle_solution_and_writes_metric() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoext(&[
        "check", "--builtin", "particle", "--param", "rho=y",
        "--F", "-0.5*ln(1+y^2)", "--gbar", "x:z=-y",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["result"]["pass"], true);
    assert!(v["result"]["pregeodesic"]["a_part"].as_f64().unwrap() < 1e-6);
    assert!(dir.path().join("completed.json").exists());
    assert!(dir.path().join("check.json").exists());

    // Geodesics of the completed metric conserve its energy.
    let metric = dir.path().join("completed.json");
    let o = geoext(&[
        "integrate", "--what", "geodesic", "--metric", metric.to_str().unwrap(),
        "--q", "0,0.5,0", "--v", "1,-1", "--t-end", "1", "--dt", "0.01",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv(&stdout(&o));
    let e = col(&h, "E");
    let e0: f64 = rows[0][e].parse().unwrap();
    for r in &rows {
        let ei: f64 = r[e].parse().unwrap();
        assert!((ei - e0).abs() < 1e-8 * e0.abs().max(1.0), "{ei} vs {e0}");
    }
}

#[test]
fn check_without_conformal_factor_fails_b() {
    let o = geoext(&[
        "check", "--builtin", "particle", "--param", "rho=y", "--gbar", "x:z=-y",
        "--out", tempfile::tempdir().unwrap().path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let v = json(&o);
    assert_eq!(v["result"]["pass"], false);
    let failed: Vec<&str> = v["result"]["failed"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert!(failed.contains(&"B'"), "{failed:?}");
    assert!((v["result"]["B"]["max_abs"].as_f64().unwrap() - 0.25).abs() < 1e-9);
}

#[test]
fn carriage_scan_recovers_beta_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoext(&[
        "check", "--builtin", "carriage", "--param", "l=0", "--scan", "beta",
        "--scan-range=-2:2:0.5", "--grid", "2", "--states", "1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = json(&o);
    assert!((v["result"]["scan"]["beta"].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn nonholonomic_integration_keeps_constraint() {
    let o = geoext(&[
        "integrate", "--builtin", "particle", "--param", "rho=y",
        "--q", "0,1,0", "--v", "1,1", "--t-end", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv(&stdout(&o));
    let c = col(&h, "constraint_viol");
    let e = col(&h, "E");
    let e0: f64 = rows[0][e].parse().unwrap();
    assert!(rows.len() > 10);
    for r in &rows {
        assert!(r[c].parse::<f64>().unwrap().abs() < 1e-9);
        assert!((r[e].parse::<f64>().unwrap() - e0).abs() < 1e-8);
    }
}

#[test]
fn integration_failure_returns_partial_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoext(&[
        "integrate", "--builtin", "particle", "--param", "rho=sqrt(y+2)",
        "--q", "0,-1.5,0", "--v", "1,-1", "--t-end", "1", "--dt", "0.01",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let (_, rows) = csv(&text);
    assert!(rows.len() > 1 && rows.len() < 101);
}

#[test]
fn sweep_tabulates_scan_residual() {
    let o = geoext(&[
        "sweep", "--builtin", "carriage", "--values", "l=0,1", "--check", "f0-scan",
        "--scan-range=-2:2:0.5", "--grid", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv(&stdout(&o));
    assert_eq!(h, ["l", "min_residual", "best_beta"]);
    assert_eq!(rows.len(), 2);
    assert!(rows[0][1].parse::<f64>().unwrap() < 1e-6);
    assert!(rows[1][1].parse::<f64>().unwrap() > 1e-2);
}

#[test]
fn sweep_classify_over_range() {
    let o = geoext(&["sweep", "--builtin", "r4math", "--range", "eps=0:1:0.5", "--check", "classify"]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv(&stdout(&o));
    assert_eq!(rows.len(), 3);
    let l = col(&h, "level");
    assert!(rows.iter().all(|r| r[l] == "INVARIANT_MEASURE_ONLY"));
}

#[test]
fn sweep_rejects_bad_input() {
    let empty = geoext(&["sweep", "--builtin", "carriage", "--range", "l=1:0:0.5", "--check", "phi"]);
    assert_eq!(empty.status.code(), Some(2));
    let unknown = geoext(&["sweep", "--builtin", "carriage", "--values", "zeta=1", "--check", "phi"]);
    assert_eq!(unknown.status.code(), Some(2));
    let neither = geoext(&["sweep", "--builtin", "carriage", "--check", "phi"]);
    assert_eq!(neither.status.code(), Some(2));
}

#[test]
fn invalid_inputs_exit_two() {
    assert_eq!(geoext(&["classify", "--builtin", "nope"]).status.code(), Some(2));
    assert_eq!(geoext(&["classify"]).status.code(), Some(2));
    assert_eq!(
        geoext(&["check", "--builtin", "particle", "--gbar", "x:z=-y+"]).status.code(),
        Some(2)
    );
    assert_eq!(geoext(&["classify", "--builtin", "particle", "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn json_output_is_deterministic() {
    let args = ["classify", "--builtin", "carriage", "--param", "l=1", "--grid", "2"];
    let a = geoext(&args);
    let b = geoext(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let keys: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \""))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn particle_family_classifies_phi_simple() {
    let o = geoext(&[
        "sweep", "--builtin", "particle", "--param", "rho=a*y",
        "--values", "a=0.5,1,2", "--check", "classify",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv(&stdout(&o));
    let l = col(&h, "level");
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[l] == "PHI_SIMPLE"), "{rows:?}");
}

#[test]
fn reduced_carriage_matches_projected_full_run() {
    let full = geoext(&[
        "integrate", "--builtin", "carriage", "--param", "l=1",
        "--q", "0,0,0,0.1,0.2", "--v", "1,-0.5", "--t-end", "1", "--dt", "0.01",
    ]);
    let red = geoext(&[
        "integrate", "--builtin", "carriage", "--param", "l=1", "--what", "reduced",
        "--q", "0.1,0.2", "--v", "1,-0.5", "--t-end", "1", "--dt", "0.01",
    ]);
    assert_eq!(full.status.code(), Some(0));
    assert_eq!(red.status.code(), Some(0));
    let (hf, rf) = csv(&stdout(&full));
    let (hr, rr) = csv(&stdout(&red));
    assert_eq!(rf.len(), rr.len());
    for name in ["psi1", "psi2", "v_psi1", "v_psi2"] {
        let (a, b) = (col(&hf, name), col(&hr, name));
        for (x, y) in rf.iter().zip(&rr) {
            let d = x[a].parse::<f64>().unwrap() - y[b].parse::<f64>().unwrap();
            assert!(d.abs() < 1e-8, "{name}: {d}");
        }
    }
}
