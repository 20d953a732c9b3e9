use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{constant, ExprField, FieldRef, FnField};
use crate::geometry::{ConfigSpace, Frame, Metric, ProjectedField, VectorField};
use crate::linalg::Mat;
use crate::system::{Domain, FramedSystem, GroupAction};

pub const BUILTIN_NAMES: [&str; 4] = ["particle", "carriage", "r4math", "flat"];

/// Builtin parameters arrive as text; numeric ones are parsed here.
pub type Params = BTreeMap<String, String>;

pub fn builtin(name: &str, params: &Params) -> Result<FramedSystem> {
    match name {
        "particle" => particle(params),
        "carriage" => carriage(&numeric(params, &carriage_defaults())?),
        "r4math" => r4math(&numeric(params, &r4_defaults())?),
        "flat" => flat(&numeric(params, &BTreeMap::new())?),
        _ => Err(Error::UnknownSystem(name.to_string())),
    }
}

fn numeric(params: &Params, defaults: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let mut out = defaults.clone();
    for (k, v) in params {
        if !defaults.contains_key(k) {
            return Err(Error::UnknownParameter(k.clone()));
        }
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("parameter {k} expects a number, got `{v}`")))?;
        out.insert(k.clone(), x);
    }
    Ok(out)
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn expr_field(srcs: &[&str], coords: &[String], consts: &BTreeMap<String, f64>) -> Result<FieldRef> {
    Ok(ExprField::parse(srcs, coords, consts)?.arc())
}

fn vf(srcs: &[&str], coords: &[String], consts: &BTreeMap<String, f64>) -> Result<VectorField> {
    Ok(VectorField(expr_field(srcs, coords, consts)?))
}

fn euclidean(n: usize) -> Metric {
    Metric::new(constant(n, Mat::identity(n, n).as_slice().to_vec()))
}

/// `ż = ρ ẋ` on R³ with the Euclidean metric; `rho` is an expression in
/// `x, y, z` and any numeric parameters.
fn particle(params: &Params) -> Result<FramedSystem> {
    let rho_src = params.get("rho").map(String::as_str).unwrap_or("y");
    let rho = crate::expr::parse(rho_src)?;
    let coords = strings(&["x", "y", "z"]);
    let mut consts = BTreeMap::new();
    for (k, v) in params {
        if k == "rho" {
            continue;
        }
        if !rho.depends_on(k) {
            return Err(Error::UnknownParameter(k.clone()));
        }
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("parameter {k} expects a number, got `{v}`")))?;
        consts.insert(k.clone(), x);
    }
    let field = ExprField::new(&[rho], &coords, &consts)?.arc();
    let mut sys = particle_with_rho(field)?;
    sys.params = consts;
    sys.labels.push(format!("rho={rho_src}"));
    Ok(sys)
}

/// Particle frame from a scalar field `ρ(x, y, z)`, which only needs a
/// value and gradient.
pub fn particle_with_rho(rho: FieldRef) -> Result<FramedSystem> {
    if rho.dim_in() != 3 || rho.len() != 1 {
        return Err(Error::Invalid("rho must be a scalar field on R^3".into()));
    }
    let coords = strings(&["x", "y", "z"]);
    let r1 = rho.clone();
    let r2 = rho.clone();
    let xx = FnField::new(3, 3, move |q| Ok(vec![1.0, 0.0, r1.eval(q)?[0]]))
        .with_jacobian(move |q| {
            let g = r2.jacobian(q)?;
            let mut j = Mat::zeros(3, 3);
            for c in 0..3 {
                j[(2, c)] = g[(0, c)];
            }
            Ok(j)
        })
        .arc();
    let xy = constant(3, vec![0.0, 1.0, 0.0]);
    let r3 = rho.clone();
    let r4 = rho.clone();
    let xz = FnField::new(3, 3, move |q| {
        let r = r3.eval(q)?[0];
        let s = 1.0 + r * r;
        Ok(vec![-r / s, 0.0, 1.0 / s])
    })
    .with_jacobian(move |q| {
        let r = r4.eval(q)?[0];
        let g = r4.jacobian(q)?;
        let s = 1.0 + r * r;
        let mut j = Mat::zeros(3, 3);
        for c in 0..3 {
            j[(0, c)] = g[(0, c)] * (r * r - 1.0) / (s * s);
            j[(2, c)] = -2.0 * r * g[(0, c)] / (s * s);
        }
        Ok(j)
    })
    .arc();
    Ok(FramedSystem {
        name: "particle".into(),
        space: ConfigSpace::from_strings(coords.clone())?,
        metric: euclidean(3),
        frame: Frame {
            d: vec![VectorField(xx), VectorField(xy)],
            perp: vec![VectorField(xz)],
            d_names: strings(&["x", "y"]),
            perp_names: strings(&["z"]),
        },
        params: BTreeMap::new(),
        domain: Domain::cube(3, -1.0, 1.0, 5),
        group: Some(GroupAction {
            generators: vec![VectorField(constant(3, vec![0.0, 0.0, 1.0]))],
            generator_names: strings(&["z"]),
            reduced: vec![0, 1],
            section: vec![0.0; 3],
        }),
        labels: vec![],
    })
}

pub fn carriage_defaults() -> BTreeMap<String, f64> {
    [("R", 1.0), ("c", 1.0), ("m", 2.0), ("m0", 1.0), ("J", 1.0), ("J2", 1.0), ("l", 1.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// `ℓ₁ = √((R²m + 2J₂)(JR² + 2J₂c²)) / (m₀R²)`.
pub fn carriage_l1(p: &BTreeMap<String, f64>) -> f64 {
    let g = |k: &str| p[k];
    let (r, c, m, m0, j, j2) = (g("R"), g("c"), g("m"), g("m0"), g("J"), g("J2"));
    ((r * r * m + 2.0 * j2) * (j * r * r + 2.0 * j2 * c * c)).sqrt() / (m0 * r * r)
}

/// Gyroscopic constant `R³m₀/(4c²(P+Q))` of the carriage with
/// `P + Q = J₂ + R²J/(2c²)`.
pub fn carriage_kappa(p: &BTreeMap<String, f64>) -> f64 {
    let g = |k: &str| p[k];
    let (r, c, m0, j, j2) = (g("R"), g("c"), g("m0"), g("J"), g("J2"));
    let p_plus_q = j2 + r * r * j / (2.0 * c * c);
    r.powi(3) * m0 / (4.0 * c * c * p_plus_q)
}

pub const CARRIAGE_METRIC: [[&str; 5]; 5] = [
    ["m", "0", "-m0*l*sin(theta)", "0", "0"],
    ["0", "m", "m0*l*cos(theta)", "0", "0"],
    ["-m0*l*sin(theta)", "m0*l*cos(theta)", "J", "0", "0"],
    ["0", "0", "0", "J2", "0"],
    ["0", "0", "0", "0", "J2"],
];

fn carriage(p: &BTreeMap<String, f64>) -> Result<FramedSystem> {
    let coords = strings(&["x", "y", "theta", "psi1", "psi2"]);
    let flat: Vec<&str> = CARRIAGE_METRIC.iter().flatten().copied().collect();
    let metric_field = expr_field(&flat, &coords, p)?;
    let x1 = vf(
        &["-R/2*cos(theta)", "-R/2*sin(theta)", "-R/(2*c)", "1", "0"],
        &coords,
        p,
    )?;
    let x2 = vf(
        &["-R/2*cos(theta)", "-R/2*sin(theta)", "R/(2*c)", "0", "1"],
        &coords,
        p,
    )?;
    let gens = vec![
        vf(&["1", "0", "0", "0", "0"], &coords, p)?,
        vf(&["0", "1", "0", "0", "0"], &coords, p)?,
        vf(&["-y", "x", "1", "0", "0"], &coords, p)?,
    ];
    let d: Vec<FieldRef> = vec![x1.0.clone(), x2.0.clone()];
    let perp = gens
        .iter()
        .map(|v| VectorField(ProjectedField::new(d.clone(), v.0.clone(), metric_field.clone()).arc()))
        .collect();
    let mut metric = Metric::new(metric_field);
    // Indefinite once m J < m0² ℓ².
    metric.possibly_degenerate = true;
    let half_pi = std::f64::consts::FRAC_PI_2;
    Ok(FramedSystem {
        name: "carriage".into(),
        space: ConfigSpace::from_strings(coords)?,
        metric,
        frame: Frame {
            d: vec![x1, x2],
            perp,
            d_names: strings(&["psi1", "psi2"]),
            perp_names: strings(&["x", "y", "theta"]),
        },
        params: p.clone(),
        domain: Domain {
            lo: vec![-1.0, -1.0, -half_pi, -1.0, -1.0],
            hi: vec![1.0, 1.0, half_pi, 1.0, 1.0],
            points: 3,
        },
        group: Some(GroupAction {
            generators: gens,
            generator_names: strings(&["x", "y", "theta"]),
            reduced: vec![3, 4],
            section: vec![0.0; 5],
        }),
        labels: vec![],
    })
}

pub fn r4_defaults() -> BTreeMap<String, f64> {
    [("eps".to_string(), 0.0)].into_iter().collect()
}

/// Coordinate metric of the four-dimensional example, row-major over
/// `(x, y, z, u)`.
pub const R4_METRIC: [[&str; 4]; 4] = [
    [
        "1 + 2*(y-z) + 4*(y-z)^2 + eps",
        "1 + (y-x) + 4*(z-x)*(y-z)",
        "1 + (x-z) + 4*(x-y)*(y-z)",
        "1 + 4*(y-z)",
    ],
    [
        "1 + (y-x) + 4*(z-x)*(y-z)",
        "1 + 2*(z-x) + 4*(z-x)^2 + eps",
        "1 + (z-y) + 4*(z-x)*(x-y)",
        "1 + 4*(z-x)",
    ],
    [
        "1 + (x-z) + 4*(x-y)*(y-z)",
        "1 + (z-y) + 4*(z-x)*(x-y)",
        "1 + 2*(x-y) + 4*(x-y)^2 + eps",
        "1 + 4*(x-y)",
    ],
    ["1 + 4*(y-z)", "1 + 4*(z-x)", "1 + 4*(x-y)", "4"],
];

/// `eps` adds `eps·I` to the constraint block; at `eps = 0` the metric has
/// rank two and the complement field is the closed form `∂u − ∂x − ∂y − ∂z`.
fn r4math(p: &BTreeMap<String, f64>) -> Result<FramedSystem> {
    let eps = p["eps"];
    if eps < 0.0 {
        return Err(Error::Invalid("eps must be non-negative".into()));
    }
    let coords = strings(&["x", "y", "z", "u"]);
    let flat: Vec<&str> = R4_METRIC.iter().flatten().copied().collect();
    let metric_field = expr_field(&flat, &coords, p)?;
    let d = vec![
        vf(&["1", "0", "0", "-(y-z)"], &coords, p)?,
        vf(&["0", "1", "0", "-(z-x)"], &coords, p)?,
        vf(&["0", "0", "1", "-(x-y)"], &coords, p)?,
    ];
    let vu = vf(&["0", "0", "0", "1"], &coords, p)?;
    let xu = if eps == 0.0 {
        vf(&["-1", "-1", "-1", "1"], &coords, p)?
    } else {
        let dref: Vec<FieldRef> = d.iter().map(|f| f.0.clone()).collect();
        VectorField(ProjectedField::new(dref, vu.0.clone(), metric_field.clone()).arc())
    };
    let mut metric = Metric::new(metric_field);
    let mut labels = vec![];
    if eps == 0.0 {
        metric.possibly_degenerate = true;
    } else {
        labels.push("regularized".to_string());
    }
    Ok(FramedSystem {
        name: "r4math".into(),
        space: ConfigSpace::from_strings(coords)?,
        metric,
        frame: Frame {
            d,
            perp: vec![xu],
            d_names: strings(&["x", "y", "z"]),
            perp_names: strings(&["u"]),
        },
        params: p.clone(),
        domain: Domain::cube(4, -1.0, 1.0, 3),
        group: Some(GroupAction {
            generators: vec![vu],
            generator_names: strings(&["u"]),
            reduced: vec![0, 1, 2],
            section: vec![0.0; 4],
        }),
        labels,
    })
}

/// Integrable constraint `ż = 0` on Euclidean R³.
fn flat(p: &BTreeMap<String, f64>) -> Result<FramedSystem> {
    let coords = strings(&["x", "y", "z"]);
    let e = |i: usize| {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        VectorField(constant(3, v))
    };
    Ok(FramedSystem {
        name: "flat".into(),
        space: ConfigSpace::from_strings(coords)?,
        metric: euclidean(3),
        frame: Frame {
            d: vec![e(0), e(1)],
            perp: vec![e(2)],
            d_names: strings(&["x", "y"]),
            perp_names: strings(&["z"]),
        },
        params: p.clone(),
        domain: Domain::cube(3, -1.0, 1.0, 5),
        group: Some(GroupAction {
            generators: vec![e(2)],
            generator_names: strings(&["z"]),
            reduced: vec![0, 1],
            section: vec![0.0; 3],
        }),
        labels: vec![],
    })
}

pub fn arc_rho(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FieldRef {
    let f = Arc::new(f);
    FnField::new(3, 1, move |q| Ok(vec![f(q)])).arc()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bracket_coefficients, metric_in_frame};

    fn p(pairs: &[(&str, &str)]) -> Params {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn particle_brackets_at_unit_slope() {
        let s = builtin("particle", &p(&[("rho", "y")])).unwrap();
        let t = bracket_coefficients(&s.frame, &[0.0, 1.0, 0.0]).unwrap();
        let (x, y, z) = (0, 1, 2);
        assert!((t.get(z, x, y) + 1.0).abs() < 1e-12);
        assert!((t.get(x, x, y) + 0.5).abs() < 1e-12);
        assert!((t.get(z, z, y) - 0.5).abs() < 1e-12);
        // Antisymmetry forces R^z_yz = -R^z_zy.
        assert!((t.get(z, y, z) + 0.5).abs() < 1e-12);
        assert!((t.get(x, y, z) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn particle_frame_blocks() {
        let s = builtin("particle", &Params::new()).unwrap();
        let fm = metric_in_frame(&s.metric, &s.frame, &[0.0, 1.0, 0.0]).unwrap();
        assert!((fm.g_ab[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((fm.g_ab[(1, 1)] - 1.0).abs() < 1e-14);
        assert!((fm.g_ij[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(fm.g_ai.amax() < 1e-15);
    }

    #[test]
    fn r4_brackets_are_constant() {
        let s = builtin("r4math", &Params::new()).unwrap();
        for q in [[0.0; 4], [0.3, -0.2, 0.9, 5.0]] {
            let t = bracket_coefficients(&s.frame, &q).unwrap();
            assert!((t.get(3, 0, 1) - 2.0).abs() < 1e-12);
            assert!((t.get(3, 0, 2) + 2.0).abs() < 1e-12);
            assert!((t.get(3, 1, 2) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn r4_frame_values() {
        let s = builtin("r4math", &Params::new()).unwrap();
        let q = [0.2, -0.4, 0.7, 0.0];
        let fm = metric_in_frame(&s.metric, &s.frame, &q).unwrap();
        assert!((fm.g_ab - Mat::from_element(3, 3, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn carriage_l1_unit_parameters() {
        assert!((carriage_l1(&carriage_defaults()) - 12f64.sqrt()).abs() < 1e-15);
        assert!((carriage_kappa(&carriage_defaults()) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(matches!(builtin("nope", &Params::new()), Err(Error::UnknownSystem(_))));
        assert!(matches!(
            builtin("carriage", &p(&[("q", "1")])),
            Err(Error::UnknownParameter(_))
        ));
        assert!(matches!(
            builtin("particle", &p(&[("a", "1")])),
            Err(Error::UnknownParameter(_))
        ));
    }
}
