use std::path::Path;

use anyhow::anyhow;
use geoext_core::chaplygin::{build_structure, classify, phi_infeasibility, ReducedFlow};
use geoext_core::dynamics::{integrate, Flow, GeodesicFlow, IntegrateOpts, NonholonomicFlow};
use geoext_core::extensions::{
    carriage_ansatz, complete_metric, condition_a_report, condition_b_report, pregeodesic_along,
    scan_preserving_extension, Candidate, CompletedMetric,
};
use geoext_core::report::{classification_markdown, envelope, fmt_float, table_markdown, to_json};
use geoext_core::{Error, FramedSystem, State, Trajectory};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{CheckArgs, ClassifyArgs, Common, IntegrateArgs, ScanKind, SweepArgs, SweepCheck, What};
use crate::exit::{invalid, Outcome, INTEGRATION, OK, RESIDUAL};
use crate::source::{parse_kv, parse_list, parse_range, SystemSpec};

fn grid_points(c: &Common, sys: &FramedSystem) -> Result<Vec<Vec<f64>>, Outcome> {
    let n = c.grid.unwrap_or(sys.domain.points);
    if n == 0 {
        return Err(invalid(anyhow!("--grid must be at least 1")));
    }
    Ok(sys.domain.with_points(n).grid())
}

fn check_tol(c: &Common) -> Result<(), Outcome> {
    if c.tol > 0.0 && c.tol.is_finite() {
        Ok(())
    } else {
        Err(invalid(anyhow!("--tol must be positive")))
    }
}

fn write_out(c: &Common, file: &str, body: &str) -> Result<(), Outcome> {
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(file), body)?;
    }
    Ok(())
}

/// Prints the report and mirrors it into `--out` when given.
fn emit(c: &Common, stem: &str, value: &Value, markdown: impl FnOnce() -> String) -> Result<(), Outcome> {
    let (body, ext) = if c.markdown {
        (markdown(), "md")
    } else {
        (to_json(value)?, "json")
    };
    print!("{body}");
    write_out(c, &format!("{stem}.{ext}"), &body)
}

pub fn cmd_classify(a: &ClassifyArgs) -> Result<i32, Outcome> {
    let c = &a.common;
    check_tol(c)?;
    let spec = SystemSpec::from_common(c)?;
    let sys = spec.load()?;
    let st = build_structure(&sys, &grid_points(c, &sys)?)?;
    let n = c.grid.unwrap_or(sys.domain.points);
    let rep = classify(&st, &st.reduced_grid(n), c.tol)?;
    info!("{}: level {}", sys.name, rep.level);
    let mut v = envelope("classify", &rep)?;
    v["system"] = spec.to_json();
    emit(c, "classify", &v, || classification_markdown(&rep))?;
    Ok(if rep.level == geoext_core::Level::NONE { RESIDUAL } else { OK })
}

/// Candidate description, stored alongside completed metrics.
struct CandidateSpec {
    f: String,
    gbar: Vec<String>,
    scan_beta: Option<f64>,
}

impl CandidateSpec {
    fn build(&self, sys: &FramedSystem) -> Result<Candidate, Outcome> {
        if let Some(b) = self.scan_beta {
            return Ok(carriage_ansatz(sys, b)?);
        }
        let mut entries = Vec::new();
        for g in &self.gbar {
            let (lhs, expr) = g
                .split_once('=')
                .ok_or_else(|| invalid(anyhow!("--gbar needs a:i=expr, got `{g}`")))?;
            let (ai, ii) = lhs
                .split_once(':')
                .ok_or_else(|| invalid(anyhow!("--gbar needs a:i=expr, got `{g}`")))?;
            entries.push(((ai.trim().to_string(), ii.trim().to_string()), expr.trim().to_string()));
        }
        Ok(Candidate::from_exprs(sys, &entries, &self.f)?)
    }

    fn to_json(&self) -> Value {
        json!({"F": self.f, "gbar": self.gbar, "scan_beta": self.scan_beta})
    }

    fn from_json(v: &Value) -> Result<Self, Outcome> {
        let bad = || invalid(anyhow!("malformed candidate in metric file"));
        Ok(CandidateSpec {
            f: v.get("F").and_then(Value::as_str).ok_or_else(bad)?.to_string(),
            gbar: v
                .get("gbar")
                .and_then(Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(bad))
                .collect::<Result<_, _>>()?,
            scan_beta: v.get("scan_beta").and_then(Value::as_f64),
        })
    }
}

/// Uniform states in the central half of the sampling box.
fn random_states(sys: &FramedSystem, count: usize, seed: u64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = sys
                .domain
                .lo
                .iter()
                .zip(&sys.domain.hi)
                .map(|(lo, hi)| {
                    let mid = 0.5 * (lo + hi);
                    mid + 0.25 * (hi - lo) * rng.gen_range(-1.0..1.0)
                })
                .collect();
            let v = (0..sys.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            State::new(q, v)
        })
        .collect()
}

pub fn cmd_check(a: &CheckArgs) -> Result<i32, Outcome> {
    let c = &a.common;
    check_tol(c)?;
    let spec = SystemSpec::from_common(c)?;
    let sys = spec.load()?;
    let points = grid_points(c, &sys)?;
    let mut report = serde_json::Map::new();
    let mut cand_spec = CandidateSpec {
        f: a.f.clone(),
        gbar: a.gbar.clone(),
        scan_beta: None,
    };
    if a.scan == Some(ScanKind::Beta) {
        if !a.gbar.is_empty() || a.f.trim() != "0" {
            return Err(invalid(anyhow!("--scan replaces --gbar and --F")));
        }
        let betas = parse_range(&a.scan_range)?;
        let scan = scan_preserving_extension(&sys, |b| carriage_ansatz(&sys, b), &betas, &points)?;
        info!("scan: beta = {} residual = {:e}", scan.best, scan.min_residual);
        report.insert("scan".into(), json!({"beta": scan.best, "min_residual": scan.min_residual}));
        cand_spec.scan_beta = Some(scan.best);
    }
    let cand = cand_spec.build(&sys)?;
    let ra = condition_a_report(&sys, &cand, &points, c.tol)?;
    let rb = condition_b_report(&sys, &cand, &points, c.tol)?;
    let mut failed = Vec::new();
    if !ra.pass {
        failed.push("A'");
    }
    if !rb.pass {
        failed.push("B'");
    }
    report.insert("A".into(), serde_json::to_value(&ra).map_err(|e| invalid(anyhow!(e)))?);
    report.insert("B".into(), serde_json::to_value(&rb).map_err(|e| invalid(anyhow!(e)))?);

    let mut code = OK;
    match complete_metric(&sys, &cand, &points) {
        Ok(cm) => {
            report.insert(
                "completion".into(),
                json!({"pass": true, "scale": cm.scale, "reference": cm.reference, "worst_eigenvalue": cm.worst_eigenvalue}),
            );
            write_completed(c, &spec, &cand_spec, &sys, &cm, &points)?;
            let metric = cm.metric();
            let opts = IntegrateOpts::rk4(1e-2);
            let mut worst = (0.0f64, 0.0f64);
            for s in random_states(&sys, a.states, c.seed) {
                match pregeodesic_along(&sys, &metric, &cand.f, &s, 1.0, &opts) {
                    Ok((pa, pi, _)) => worst = (worst.0.max(pa), worst.1.max(pi)),
                    Err(e @ Error::Integration { .. }) => {
                        log::error!("{e}");
                        code = INTEGRATION;
                        worst = (f64::INFINITY, f64::INFINITY);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let pass = worst.0 <= c.tol && worst.1 <= c.tol;
            if !pass {
                failed.push("pregeodesic");
            }
            report.insert(
                "pregeodesic".into(),
                json!({"a_part": worst.0, "i_part": worst.1, "pass": pass, "states": a.states, "seed": c.seed}),
            );
        }
        Err(Error::CompletionFailed(w)) => {
            failed.push("completion");
            report.insert("completion".into(), json!({"pass": false, "worst_eigenvalue": w}));
        }
        Err(e) => return Err(e.into()),
    }
    let pass = failed.is_empty();
    report.insert("candidate".into(), cand_spec.to_json());
    report.insert("failed".into(), json!(failed));
    report.insert("pass".into(), json!(pass));
    report.insert("tolerance".into(), json!(c.tol));
    report.insert("points".into(), json!(points.len()));
    let mut v = envelope("check", &Value::Object(report.clone()))?;
    v["system"] = spec.to_json();
    emit(c, "check", &v, || {
        let num = |k: &str, f: &str| {
            report
                .get(k)
                .and_then(|x| x.get(f))
                .and_then(Value::as_f64)
                .map(|x| format!("{x:.6e}"))
                .unwrap_or_else(|| "n/a".into())
        };
        let rows = vec![
            ("(A′) max residual".into(), num("A", "max_abs")),
            ("(B′) max residual".into(), num("B", "max_abs")),
            ("completion worst eigenvalue".into(), num("completion", "worst_eigenvalue")),
            ("pregeodesic a-part".into(), num("pregeodesic", "a_part")),
            ("pregeodesic i-part".into(), num("pregeodesic", "i_part")),
            ("scan β".into(), num("scan", "beta")),
            ("failed".into(), if pass { "none".into() } else { failed.join(", ") }),
        ];
        table_markdown(&format!("Check: {}", sys.name), &rows)
    })?;
    if code != OK {
        return Ok(code);
    }
    Ok(if pass { OK } else { RESIDUAL })
}

fn write_completed(
    c: &Common,
    spec: &SystemSpec,
    cand: &CandidateSpec,
    sys: &FramedSystem,
    cm: &CompletedMetric,
    points: &[Vec<f64>],
) -> Result<(), Outcome> {
    use geoext_core::Field;
    let samples = points
        .iter()
        .map(|q| Ok(json!({"q": q, "g": cm.eval(q)?})))
        .collect::<Result<Vec<Value>, Error>>()?;
    let v = json!({
        "schema": geoext_core::report::SCHEMA_VERSION,
        "system": spec.to_json(),
        "candidate": cand.to_json(),
        "coords": sys.space.coord_names,
        "scale": cm.scale,
        "reference": cm.reference,
        "samples": samples,
    });
    let dir = c.out.clone().unwrap_or_else(|| ".".into());
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("completed.json"), to_json(&v)?)?;
    Ok(())
}

/// Rebuilds the completed metric described by a `completed.json`.
fn load_completed(path: &Path) -> Result<(FramedSystem, CompletedMetric), Outcome> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?;
    let spec = SystemSpec::from_json(v.get("system").ok_or_else(|| invalid(anyhow!("missing `system`")))?)?;
    let cand = CandidateSpec::from_json(v.get("candidate").ok_or_else(|| invalid(anyhow!("missing `candidate`")))?)?;
    let sys = spec.load()?;
    let points: Vec<Vec<f64>> = v
        .get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid(anyhow!("missing `samples`")))?
        .iter()
        .map(|s| {
            s.get("q")
                .and_then(|q| serde_json::from_value::<Vec<f64>>(q.clone()).ok())
                .ok_or_else(|| invalid(anyhow!("malformed sample")))
        })
        .collect::<Result<_, _>>()?;
    let cm = complete_metric(&sys, &cand.build(&sys)?, &points)?;
    Ok((sys, cm))
}

fn csv_out(c: &Common, traj: &Trajectory) -> Result<(), Outcome> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    match &c.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("trajectory.csv"), &buf)?;
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

pub fn cmd_integrate(a: &IntegrateArgs) -> Result<i32, Outcome> {
    let c = &a.common;
    let q = parse_list(&a.q)?;
    let v = parse_list(&a.v)?;
    if !(a.t_end > 0.0) {
        return Err(invalid(anyhow!("--t-end must be positive")));
    }
    let opts = match a.dt {
        Some(dt) if dt > 0.0 => IntegrateOpts::rk4(dt),
        Some(_) => return Err(invalid(anyhow!("--dt must be positive"))),
        None => IntegrateOpts::rk45(1e-10, 1e-12),
    };
    let (sys, completed) = match &a.metric {
        Some(p) => {
            let (s, cm) = load_completed(p)?;
            (s, Some(cm))
        }
        None => (SystemSpec::from_common(c)?.load()?, None),
    };
    let run = |flow: &dyn Flow, s0: State| -> Result<i32, Outcome> {
        if s0.q.len() != flow.nq() || s0.v.len() != flow.nv() {
            return Err(invalid(anyhow!(
                "need {} coordinates and {} velocities",
                flow.nq(),
                flow.nv()
            )));
        }
        match integrate(flow, &s0, a.t_end, &opts) {
            Ok(t) => {
                csv_out(c, &t)?;
                Ok(OK)
            }
            Err(Error::Integration { t, reason, partial }) => {
                log::error!("integration failed at t = {t}: {reason}");
                csv_out(c, &partial)?;
                Ok(INTEGRATION)
            }
            Err(e) => Err(e.into()),
        }
    };
    match a.what {
        What::Nh => {
            if completed.is_some() {
                return Err(invalid(anyhow!("--metric only applies to --what geodesic")));
            }
            run(&NonholonomicFlow::new(&sys), State::new(q, v))
        }
        What::Geodesic => {
            let metric = completed.map(|cm| cm.metric()).unwrap_or_else(|| sys.metric.clone());
            let mut v = v;
            if v.len() == sys.m() {
                v.resize(sys.n(), 0.0);
            }
            let flow = GeodesicFlow::new(metric, sys.frame.clone(), sys.space.coord_names.clone());
            run(&flow, State::new(q, v))
        }
        What::Reduced => {
            let st = build_structure(&sys, &sys.domain.with_points(3).grid())?;
            run(&ReducedFlow { st: &st }, State::new(q, v))
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32, Outcome> {
    let c = &a.common;
    check_tol(c)?;
    let spec = SystemSpec::from_common(c)?;
    let (name, values) = match (&a.range, &a.values) {
        (Some(r), None) => {
            let (k, v) = parse_kv(r)?;
            (k, parse_range(&v)?)
        }
        (None, Some(l)) => {
            let (k, v) = parse_kv(l)?;
            (k, parse_list(&v)?)
        }
        _ => return Err(invalid(anyhow!("exactly one of --range or --values is required"))),
    };
    if values.is_empty() {
        return Err(invalid(anyhow!("empty parameter list")));
    }
    // Surfaces unknown parameters before any work is scheduled.
    spec.with_param(&name, &values[0].to_string()).load()?;
    let betas = parse_range(&a.scan_range)?;
    let rows: Vec<Vec<String>> = values
        .par_iter()
        .map(|x| -> Result<Vec<String>, Outcome> {
            let sys = spec.with_param(&name, &x.to_string()).load()?;
            let points = grid_points(c, &sys)?;
            let n = c.grid.unwrap_or(sys.domain.points);
            let mut row = vec![fmt_float(*x)];
            match a.check {
                SweepCheck::F0Scan => {
                    let r = scan_preserving_extension(&sys, |b| carriage_ansatz(&sys, b), &betas, &points)?;
                    row.push(fmt_float(r.min_residual));
                    row.push(fmt_float(r.best));
                }
                SweepCheck::Classify => {
                    let st = build_structure(&sys, &points)?;
                    let rep = classify(&st, &st.reduced_grid(n), c.tol)?;
                    row.push(rep.level.to_string());
                    for k in ["beta_norm", "dbeta_norm", "wedge_vs_XiG", "wedge_vs_gammaG", "ThetaG_norm"] {
                        row.push(fmt_float(rep.residuals[k]));
                    }
                }
                SweepCheck::Phi => {
                    let st = build_structure(&sys, &points)?;
                    let worst = st
                        .reduced_grid(n)
                        .iter()
                        .map(|r| phi_infeasibility(&st, r))
                        .collect::<Result<Vec<f64>, Error>>()?
                        .into_iter()
                        .fold(0.0, f64::max);
                    row.push(fmt_float(worst));
                }
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let header = match a.check {
        SweepCheck::F0Scan => vec![name.clone(), "min_residual".into(), "best_beta".into()],
        SweepCheck::Classify => [name.as_str(), "level", "beta_norm", "dbeta_norm", "wedge_vs_XiG", "wedge_vs_gammaG", "ThetaG_norm"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        SweepCheck::Phi => vec![name.clone(), "phi_infeasibility".into()],
    };
    let mut body = header.join(",");
    body.push('\n');
    for r in rows {
        body.push_str(&r.join(","));
        body.push('\n');
    }
    print!("{body}");
    write_out(c, "sweep.csv", &body)?;
    Ok(OK)
}
