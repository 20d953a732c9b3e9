#![allow(dead_code)]

use std::collections::BTreeMap;

use geoext_core::expr::{BinOp, Compiled, Func};
use geoext_core::geometry::{bracket_coefficients, frame_matrix};
use geoext_core::dynamics::geodesic_field;
use geoext_core::linalg::{Mat, Vector};
use geoext_core::systems::{builtin, Params};
use geoext_core::{Expr, Frame, FramedSystem, Metric, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sys(name: &str, params: &[(&str, &str)]) -> FramedSystem {
    let p: Params = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    builtin(name, &p).unwrap()
}

pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vector, q: &[f64]) -> Mat {
    let h = 1e-5;
    let cols: Vec<Vector> = (0..q.len())
        .map(|k| {
            let (mut hi, mut lo) = (q.to_vec(), q.to_vec());
            hi[k] += h;
            lo[k] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect();
    Mat::from_columns(&cols)
}

/// Bracket table `[(γ·n + α)·n + β]` from explicit Jacobians of the fields.
pub fn oracle_brackets(frame: &Frame, q: &[f64]) -> Vec<f64> {
    let n = frame.n();
    let einv = frame_matrix(frame, q).unwrap().try_inverse().unwrap();
    let comps: Vec<Vector> = (0..n).map(|a| frame.field(a).components(q).unwrap()).collect();
    let jacs: Vec<Mat> = (0..n)
        .map(|a| fd_jacobian(|p| frame.field(a).components(p).unwrap(), q))
        .collect();
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            let c = &einv * (&jacs[b] * &comps[a] - &jacs[a] * &comps[b]);
            for g in 0..n {
                out[(g * n + a) * n + b] = c[g];
            }
        }
    }
    out
}

/// `(antisymmetry defect, distance to the Jacobian oracle)`.
pub fn bracket_errors(frame: &Frame, q: &[f64]) -> (f64, f64) {
    let n = frame.n();
    let t = bracket_coefficients(frame, q).unwrap();
    let o = oracle_brackets(frame, q);
    let (mut anti, mut dist) = (0.0f64, 0.0f64);
    for g in 0..n {
        for a in 0..n {
            for b in 0..n {
                anti = anti.max((t.get(g, a, b) + t.get(g, b, a)).abs());
                dist = dist.max((t.get(g, a, b) - o[(g * n + a) * n + b]).abs());
            }
        }
    }
    (anti, dist)
}

/// Geodesic acceleration in coordinates from finite differences of `g`.
pub fn coordinate_acceleration(metric: &Metric, q: &[f64], qd: &Vector) -> Vector {
    let n = q.len();
    let h = 1e-5;
    let dg: Vec<Mat> = (0..n)
        .map(|k| {
            let (mut hi, mut lo) = (q.to_vec(), q.to_vec());
            hi[k] += h;
            lo[k] -= h;
            (metric.at(&hi).unwrap() - metric.at(&lo).unwrap()) / (2.0 * h)
        })
        .collect();
    let low = Vector::from_fn(n, |k, _| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += 0.5 * (dg[i][(k, j)] + dg[j][(k, i)] - dg[k][(i, j)]) * qd[i] * qd[j];
            }
        }
        s
    });
    -(metric.at(q).unwrap().lu().solve(&low).unwrap())
}

/// `q̈` implied by a frame-velocity flow `(q̇, v̇)`; missing components are zero.
pub fn frame_acceleration(frame: &Frame, q: &[f64], v: &[f64], vd: &Vector) -> Vector {
    let n = frame.n();
    let e = frame_matrix(frame, q).unwrap();
    let mut vf = v.to_vec();
    vf.resize(n, 0.0);
    let vf = Vector::from_vec(vf);
    let qd = &e * &vf;
    let de = fd_jacobian(|p| frame_matrix(frame, p).unwrap() * &vf, q);
    let mut vdf = vd.as_slice().to_vec();
    vdf.resize(n, 0.0);
    de * qd + e * Vector::from_vec(vdf)
}

/// Relative distance between frame-Koszul and coordinate geodesic accelerations.
pub fn koszul_error(frame: &Frame, metric: &Metric, q: &[f64], v: &[f64]) -> f64 {
    let (qd, vd) = geodesic_field(metric, frame, &State::new(q.to_vec(), v.to_vec())).unwrap();
    let lhs = frame_acceleration(frame, q, v, &vd);
    let rhs = coordinate_acceleration(metric, q, &qd);
    (&lhs - &rhs).amax() / (1.0 + rhs.amax())
}

pub const VARS: [&str; 3] = ["x", "y", "z"];

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    Expr::Bin(op, Box::new(l), Box::new(r))
}

fn positive(e: Expr) -> Expr {
    bin(BinOp::Add, Expr::num(1.5), bin(BinOp::Pow, e, Expr::num(2.0)))
}

/// Random expressions whose functions stay inside their real domains near
/// the unit cube.
pub fn gen(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            Expr::var(VARS[rng.gen_range(0..3)])
        } else {
            Expr::num(f64::from(rng.gen_range(1..40)) / 8.0)
        };
    }
    let a = gen(rng, depth - 1);
    match rng.gen_range(0..10) {
        0 => bin(BinOp::Add, a, gen(rng, depth - 1)),
        1 => bin(BinOp::Sub, a, gen(rng, depth - 1)),
        2 | 3 => bin(BinOp::Mul, a, gen(rng, depth - 1)),
        4 => bin(BinOp::Div, a, positive(gen(rng, depth - 1))),
        5 => bin(BinOp::Pow, a, Expr::num(f64::from(rng.gen_range(2..4)))),
        6 => Expr::Neg(Box::new(a)),
        7 => {
            let f = [Func::Sin, Func::Cos, Func::Exp][rng.gen_range(0..3)];
            let arg = if f == Func::Exp { Expr::Call(Func::Sin, Box::new(a)) } else { a };
            Expr::Call(f, Box::new(arg))
        }
        8 => Expr::Call([Func::Ln, Func::Sqrt][rng.gen_range(0..2)], Box::new(positive(a))),
        _ => Expr::Call(
            Func::Tan,
            Box::new(bin(BinOp::Mul, Expr::num(0.5), Expr::Call(Func::Sin, Box::new(a)))),
        ),
    }
}

pub fn corpus() -> Vec<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200).map(|_| gen(&mut rng, 4)).collect()
}

pub fn compile(e: &Expr) -> Compiled {
    let slots: Vec<String> = VARS.iter().map(|s| s.to_string()).collect();
    Compiled::new(e, &slots, &BTreeMap::new()).unwrap()
}

pub const SAMPLE_POINTS: [[f64; 3]; 3] = [[0.3, -0.7, 0.55], [-0.9, 0.2, 0.1], [0.8, 0.65, -0.4]];

/// Worst `|symbolic − central difference| / (1 + |symbolic|)` over the corpus.
pub fn corpus_derivative_error() -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for e in corpus() {
        let c = compile(&e);
        for (k, var) in VARS.iter().enumerate() {
            let d = compile(&e.differentiate(var));
            for p in SAMPLE_POINTS {
                let exact = d.eval(&p).unwrap();
                let (mut hi, mut lo) = (p, p);
                hi[k] += h;
                lo[k] -= h;
                let fd = (c.eval(&hi).unwrap() - c.eval(&lo).unwrap()) / (2.0 * h);
                worst = worst.max((exact - fd).abs() / (1.0 + exact.abs()));
            }
        }
    }
    worst
}
