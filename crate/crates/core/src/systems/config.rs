//! TOML system definitions.

use std::collections::BTreeMap;
use std::sync::Arc;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::expr::{parse, Compiled, Expr};
use crate::field::{ExprField, Field, FieldRef};
use crate::geometry::{ConfigSpace, Frame, Metric, ProjectedField, VectorField};
use crate::linalg::{self, Mat};
use crate::system::{Domain, FramedSystem, GroupAction};

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn as_table<'a>(v: &'a Value, what: &str) -> Result<&'a Table> {
    v.as_table().ok_or_else(|| cfg(format!("`{what}` must be a table")))
}

fn expr_of(v: &Value, what: &str) -> Result<Expr> {
    match v {
        Value::String(s) => parse(s),
        Value::Integer(i) => Ok(Expr::Num(*i as f64)),
        Value::Float(x) => Ok(Expr::Num(*x)),
        _ => Err(cfg(format!("`{what}` must be an expression string or number"))),
    }
}

fn number_of(v: &Value, what: &str) -> Result<f64> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(x) => Ok(*x),
        _ => Err(cfg(format!("`{what}` must be a number"))),
    }
}

fn string_list(v: Option<&Value>, what: &str) -> Result<Option<Vec<String>>> {
    let Some(v) = v else { return Ok(None) };
    let arr = v.as_array().ok_or_else(|| cfg(format!("`{what}` must be an array")))?;
    arr.iter()
        .map(|x| {
            x.as_str()
                .map(str::to_string)
                .ok_or_else(|| cfg(format!("`{what}` must contain strings")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn check_keys(t: &Table, allowed: &[&str], what: &str) -> Result<()> {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(cfg(format!("unknown key `{k}` in {what}")));
        }
    }
    Ok(())
}

/// A list of `{coord = expr}` tables, one row per entry.
fn rows(v: &Value, coords: &[String], what: &str) -> Result<Vec<Vec<Expr>>> {
    let arr = v.as_array().ok_or_else(|| cfg(format!("`{what}` must be an array of tables")))?;
    arr.iter()
        .map(|row| {
            let t = as_table(row, what)?;
            let mut out = vec![Expr::Num(0.0); coords.len()];
            for (k, e) in t {
                let idx = coords
                    .iter()
                    .position(|c| c == k)
                    .ok_or_else(|| cfg(format!("unknown coordinate `{k}` in {what}")))?;
                out[idx] = expr_of(e, what)?;
            }
            Ok(out)
        })
        .collect()
}

/// Kernel of the constraint forms with pivots fixed at a reference point:
/// `X_f = ∂_f − Σ_i c_i ∂_{p_i}` where `μ_P c = μ_f`.
struct KernelField {
    n: usize,
    free: usize,
    pivots: Vec<usize>,
    mu: Vec<Vec<Compiled>>,
    dmu: Vec<Vec<Vec<Compiled>>>,
}

impl KernelField {
    fn mu_at(&self, q: &[f64]) -> Result<Mat> {
        let k = self.mu.len();
        let mut m = Mat::zeros(k, self.n);
        for (r, row) in self.mu.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                m[(r, c)] = e.eval(q)?;
            }
        }
        Ok(m)
    }

    fn coeffs(&self, q: &[f64]) -> Result<(Mat, linalg::Vector)> {
        let mu = self.mu_at(q)?;
        let k = self.pivots.len();
        let mp = Mat::from_fn(k, k, |r, c| mu[(r, self.pivots[c])]);
        let rhs = linalg::Vector::from_fn(k, |r, _| mu[(r, self.free)]);
        let c = linalg::solve(&mp, &rhs).ok_or(Error::DependentConstraints)?;
        Ok((mp, c))
    }
}

impl Field for KernelField {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn len(&self) -> usize {
        self.n
    }
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let (_, c) = self.coeffs(q)?;
        let mut v = vec![0.0; self.n];
        v[self.free] = 1.0;
        for (i, p) in self.pivots.iter().enumerate() {
            v[*p] = -c[i];
        }
        Ok(v)
    }
    fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        let (mp, c) = self.coeffs(q)?;
        let k = self.pivots.len();
        let inv = linalg::inverse(&mp).ok_or(Error::DependentConstraints)?;
        let mut j = Mat::zeros(self.n, self.n);
        for mu in 0..self.n {
            let d = |r: usize, col: usize| self.dmu[r][col][mu].eval(q);
            let mut rhs = linalg::Vector::zeros(k);
            for r in 0..k {
                let mut s = d(r, self.free)?;
                for (i, p) in self.pivots.iter().enumerate() {
                    s -= d(r, *p)? * c[i];
                }
                rhs[r] = s;
            }
            let dc = &inv * rhs;
            for (i, p) in self.pivots.iter().enumerate() {
                j[(*p, mu)] = -dc[i];
            }
        }
        Ok(j)
    }
}

/// Pivot columns of `mu` by Gaussian elimination with partial pivoting,
/// scanning columns in coordinate order.
fn pivot_columns(mu: &Mat) -> Result<Vec<usize>> {
    let (k, n) = mu.shape();
    let mut a = mu.clone();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == k {
            break;
        }
        let (best, val) = (row..k)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= 1e-10 * scale {
            continue;
        }
        a.swap_rows(row, best);
        for r in (row + 1)..k {
            let f = a[(r, col)] / a[(row, col)];
            for c in col..n {
                a[(r, c)] -= f * a[(row, c)];
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() < k {
        return Err(Error::DependentConstraints);
    }
    Ok(pivots)
}

/// Parses and builds a system. `overrides` replace values in `[params]`.
pub fn load_system(text: &str, overrides: &BTreeMap<String, f64>) -> Result<FramedSystem> {
    let root: Table = toml::from_str(text).map_err(|e| cfg(e.to_string()))?;
    check_keys(
        &root,
        &["format", "name", "space", "params", "metric", "constraints", "group", "domain"],
        "the top level",
    )?;
    match root.get("format") {
        Some(Value::Integer(1)) => {}
        Some(_) => return Err(cfg("unsupported `format`; expected 1")),
        None => return Err(cfg("missing `format = 1`")),
    }
    let name = root
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("custom")
        .to_string();

    let space = as_table(root.get("space").ok_or_else(|| cfg("missing [space]"))?, "space")?;
    check_keys(space, &["coords"], "[space]")?;
    let coords = string_list(space.get("coords"), "space.coords")?.ok_or_else(|| cfg("missing space.coords"))?;
    let cs = ConfigSpace::from_strings(coords.clone()).map_err(|e| cfg(e.to_string()))?;
    let n = coords.len();

    let mut params = BTreeMap::new();
    if let Some(p) = root.get("params") {
        for (k, v) in as_table(p, "params")? {
            if coords.contains(k) {
                return Err(cfg(format!("parameter `{k}` shadows a coordinate")));
            }
            params.insert(k.clone(), number_of(v, k)?);
        }
    }
    for (k, v) in overrides {
        if !params.contains_key(k) {
            return Err(Error::UnknownParameter(k.clone()));
        }
        params.insert(k.clone(), *v);
    }

    // Metric entries, symmetric fill.
    let mt = as_table(root.get("metric").ok_or_else(|| cfg("missing [metric]"))?, "metric")?;
    let mut entries: Vec<Option<Expr>> = vec![None; n * n];
    let mut possibly_degenerate = false;
    for (a, v) in mt {
        if a == "possibly_degenerate" {
            possibly_degenerate = v
                .as_bool()
                .ok_or_else(|| cfg("metric.possibly_degenerate must be a boolean"))?;
            continue;
        }
        let i = cs.index(a).ok_or_else(|| cfg(format!("unknown coordinate `{a}` in [metric]")))?;
        for (b, e) in as_table(v, &format!("metric.{a}"))? {
            let j = cs.index(b).ok_or_else(|| cfg(format!("unknown coordinate `{b}` in [metric]")))?;
            let e = expr_of(e, &format!("metric.{a}.{b}"))?;
            for (r, c) in [(i, j), (j, i)] {
                match &entries[r * n + c] {
                    Some(prev) if *prev != e && r != c => {
                        return Err(cfg(format!("metric entries {a}.{b} and {b}.{a} disagree")))
                    }
                    _ => entries[r * n + c] = Some(e.clone()),
                }
            }
        }
    }
    let metric_exprs: Vec<Expr> = entries.into_iter().map(|e| e.unwrap_or(Expr::Num(0.0))).collect();
    let metric_field = ExprField::new(&metric_exprs, &coords, &params)?.arc();
    let mut metric = Metric::new(metric_field.clone());
    metric.possibly_degenerate = possibly_degenerate;

    // Domain.
    let mut lo = vec![-1.0; n];
    let mut hi = vec![1.0; n];
    let mut points = 5usize;
    if let Some(d) = root.get("domain") {
        for (k, v) in as_table(d, "domain")? {
            if k == "points" {
                let p = number_of(v, "domain.points")?;
                if p < 1.0 || p.fract() != 0.0 {
                    return Err(cfg("domain.points must be a positive integer"));
                }
                points = p as usize;
                continue;
            }
            let i = cs.index(k).ok_or_else(|| cfg(format!("unknown coordinate `{k}` in [domain]")))?;
            let arr = v
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| cfg(format!("domain.{k} must be [lo, hi]")))?;
            lo[i] = number_of(&arr[0], k)?;
            hi[i] = number_of(&arr[1], k)?;
            if lo[i] > hi[i] {
                return Err(cfg(format!("domain.{k} has lo > hi")));
            }
        }
    }
    let domain = Domain { lo, hi, points };
    let center = domain.center();

    // Constraint distribution.
    let ct = as_table(root.get("constraints").ok_or_else(|| cfg("missing [constraints]"))?, "constraints")?;
    check_keys(ct, &["forms", "fields", "perp", "names", "perp_names"], "[constraints]")?;
    let (d_fields, free_names): (Vec<FieldRef>, Vec<String>) = match (ct.get("forms"), ct.get("fields")) {
        (Some(f), None) => {
            let mu_exprs = rows(f, &coords, "constraints.forms")?;
            if mu_exprs.is_empty() || mu_exprs.len() >= n {
                return Err(cfg("need between 1 and n-1 constraint forms"));
            }
            let compile = |e: &Expr| Compiled::new(e, &coords, &params);
            let mu: Vec<Vec<Compiled>> = mu_exprs
                .iter()
                .map(|r| r.iter().map(compile).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?;
            let dmu = mu_exprs
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|e| coords.iter().map(|v| compile(&e.differentiate(v))).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let probe = KernelField {
                n,
                free: 0,
                pivots: vec![],
                mu: mu.clone(),
                dmu: dmu.clone(),
            };
            let pivots = pivot_columns(&probe.mu_at(&center)?)?;
            let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
            let fields = free
                .iter()
                .map(|f| {
                    Arc::new(KernelField {
                        n,
                        free: *f,
                        pivots: pivots.clone(),
                        mu: mu.clone(),
                        dmu: dmu.clone(),
                    }) as FieldRef
                })
                .collect();
            // Independence on the whole box.
            for q in domain.grid() {
                let m = probe.mu_at(&q)?;
                let k = pivots.len();
                let mp = Mat::from_fn(k, k, |r, c| m[(r, pivots[c])]);
                if linalg::solve(&mp, &linalg::Vector::zeros(k)).is_none() {
                    return Err(Error::DependentConstraints);
                }
            }
            (fields, free.iter().map(|i| coords[*i].clone()).collect())
        }
        (None, Some(f)) => {
            let exprs = rows(f, &coords, "constraints.fields")?;
            let fields: Vec<FieldRef> = exprs
                .iter()
                .map(|r| Ok(ExprField::new(r, &coords, &params)?.arc()))
                .collect::<Result<_>>()?;
            let names = (0..fields.len()).map(|i| format!("d{}", i + 1)).collect();
            (fields, names)
        }
        _ => return Err(cfg("[constraints] needs exactly one of `forms` or `fields`")),
    };
    let m = d_fields.len();
    let d_names = string_list(ct.get("names"), "constraints.names")?.unwrap_or(free_names);
    if d_names.len() != m {
        return Err(cfg("constraints.names has the wrong length"));
    }

    // Group.
    let group = match root.get("group") {
        None => None,
        Some(g) => {
            let gt = as_table(g, "group")?;
            check_keys(gt, &["generators", "names", "reduced", "section"], "[group]")?;
            let gens = rows(
                gt.get("generators").ok_or_else(|| cfg("missing group.generators"))?,
                &coords,
                "group.generators",
            )?;
            let generators: Vec<VectorField> = gens
                .iter()
                .map(|r| Ok(VectorField(ExprField::new(r, &coords, &params)?.arc())))
                .collect::<Result<_>>()?;
            let reduced_names =
                string_list(gt.get("reduced"), "group.reduced")?.ok_or_else(|| cfg("missing group.reduced"))?;
            let reduced = reduced_names
                .iter()
                .map(|r| cs.index(r).ok_or_else(|| cfg(format!("unknown reduced coordinate `{r}`"))))
                .collect::<Result<Vec<_>>>()?;
            if reduced.len() != m || generators.len() != n - m {
                return Err(cfg("group must have n - m generators and m reduced coordinates"));
            }
            let mut section = vec![0.0; n];
            if let Some(s) = gt.get("section") {
                for (k, v) in as_table(s, "group.section")? {
                    let i = cs.index(k).ok_or_else(|| cfg(format!("unknown coordinate `{k}` in group.section")))?;
                    section[i] = number_of(v, k)?;
                }
            }
            let generator_names = string_list(gt.get("names"), "group.names")?
                .unwrap_or_else(|| (0..generators.len()).map(|i| format!("v{}", i + 1)).collect());
            Some(GroupAction {
                generators,
                generator_names,
                reduced,
                section,
            })
        }
    };

    // Complement.
    let perp: Vec<VectorField> = match ct.get("perp") {
        Some(p) => rows(p, &coords, "constraints.perp")?
            .iter()
            .map(|r| Ok(VectorField(ExprField::new(r, &coords, &params)?.arc())))
            .collect::<Result<_>>()?,
        None => {
            let seeds: Vec<FieldRef> = match &group {
                Some(g) => g.generators.iter().map(|v| v.0.clone()).collect(),
                None => (0..n)
                    .filter(|i| !d_names.contains(&coords[*i]) || m == 0)
                    .take(n - m)
                    .map(|i| {
                        let mut e = vec![0.0; n];
                        e[i] = 1.0;
                        crate::field::constant(n, e)
                    })
                    .collect(),
            };
            seeds
                .into_iter()
                .map(|w| VectorField(ProjectedField::new(d_fields.clone(), w, metric_field.clone()).arc()))
                .collect()
        }
    };
    if perp.len() != n - m {
        return Err(cfg("complement must have n - m fields"));
    }
    let perp_names = string_list(ct.get("perp_names"), "constraints.perp_names")?.unwrap_or_else(|| match &group {
        Some(g) => g.generator_names.clone(),
        None => (0..perp.len()).map(|i| format!("p{}", i + 1)).collect(),
    });

    let sys = FramedSystem {
        name,
        space: cs,
        metric,
        frame: Frame {
            d: d_fields.into_iter().map(VectorField).collect(),
            perp,
            d_names,
            perp_names,
        },
        params,
        domain,
        group,
        labels: vec![],
    };
    if !possibly_degenerate {
        for q in sys.grid() {
            if !linalg::is_positive_definite(&sys.metric.at(&q)?) {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    Ok(sys)
}

/// Scalar field on a system's coordinates from text, with its parameters.
pub fn scalar_field(src: &str, sys: &FramedSystem) -> Result<FieldRef> {
    Ok(ExprField::parse(&[src], &sys.space.coord_names, &sys.params)?.arc())
}


#[cfg(test)]
mod tests {
    use super::*;

    const PARTICLE: &str = r#"
format = 1
name = "particle"
[space]
coords = ["x", "y", "z"]
[metric]
x.x = "1"
y.y = "1"
z.z = "1"
[constraints]
forms = [{ z = "1", x = "-y" }]
[group]
generators = [{ z = "1" }]
names = ["z"]
reduced = ["x", "y"]
"#;

    #[test]
    fn particle_kernel_frame() {
        let s = load_system(PARTICLE, &BTreeMap::new()).unwrap();
        let q = [0.2, 0.7, -0.1];
        assert_eq!(s.frame.d_names, vec!["x", "y"]);
        let x = s.frame.d[0].components(&q).unwrap();
        assert!((x[2] - 0.7).abs() < 1e-15 && x[0] == 1.0);
        let j = s.frame.d[0].jacobian(&q).unwrap();
        let f = crate::field::fd_jacobian(s.frame.d[0].0.as_ref(), &q).unwrap();
        assert!((j - f).amax() < 1e-8);
    }

    #[test]
    fn duplicated_constraint_rejected() {
        let text = PARTICLE.replace(
            r#"forms = [{ z = "1", x = "-y" }]"#,
            r#"forms = [{ z = "1", x = "-y" }, { z = "1", x = "-y" }]"#,
        );
        assert!(matches!(load_system(&text, &BTreeMap::new()), Err(Error::DependentConstraints)));
    }

    #[test]
    fn non_pd_metric_rejected() {
        let text = PARTICLE.replace("z.z = \"1\"", "z.z = \"-1\"");
        assert!(matches!(load_system(&text, &BTreeMap::new()), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn malformed_rejected() {
        assert!(matches!(load_system("format = 2", &BTreeMap::new()), Err(Error::Config(_))));
        assert!(matches!(load_system("[[[", &BTreeMap::new()), Err(Error::Config(_))));
        let text = PARTICLE.replace("[metric]", "[metric]\nbogus.x = \"1\"");
        assert!(matches!(load_system(&text, &BTreeMap::new()), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_override_rejected() {
        let mut o = BTreeMap::new();
        o.insert("a".to_string(), 1.0);
        assert!(matches!(load_system(PARTICLE, &o), Err(Error::UnknownParameter(_))));
    }
}
