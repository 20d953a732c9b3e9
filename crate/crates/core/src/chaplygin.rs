//! Chaplygin symmetry layer: invariant frames, gyroscopic data,
//! classification, reduced dynamics and reparametrization checks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Flow, NonholonomicFlow, State};
use crate::error::{Error, Result};
use crate::extensions::{Candidate, Tensor};
use crate::field::{fd_step, FieldRef, FnField};
use crate::geometry::{Frame, FramePoint, MetricPoint};
use crate::linalg::{self, Mat, Vector};
use crate::quadrature;
use crate::system::{lattice, FramedSystem, GroupAction};

pub const BRACKET_TOL: f64 = 1e-8;
pub const QUADRATURE_NODES: usize = 64;

/// `G_{ai} = g(X_a, V_i)` at `q`.
pub fn vertical_coupling(sys: &FramedSystem, q: &[f64]) -> Result<Mat> {
    let group = sys.group.as_ref().ok_or_else(|| Error::Unsupported("system has no symmetry group".into()))?;
    let g = sys.metric.at(q)?;
    let (m, k) = (sys.m(), group.generators.len());
    let n = sys.n();
    let mut x = Mat::zeros(n, m);
    for a in 0..m {
        x.set_column(a, &sys.frame.d[a].components(q)?);
    }
    let mut v = Mat::zeros(n, k);
    for (i, gen) in group.generators.iter().enumerate() {
        v.set_column(i, &gen.components(q)?);
    }
    Ok(x.transpose() * g * v)
}

/// A framed system together with its symmetry, with the invariant frame
/// `{X_a, V_i}` alongside the orthogonal one.
#[derive(Clone, Debug)]
pub struct ChaplyginStructure {
    pub sys: FramedSystem,
    pub group: GroupAction,
    /// `{X_a, V_i}`.
    pub invariant_frame: Frame,
    pub reduced_coords: Vec<String>,
    /// Largest `|[X_a, V_i]|` seen during validation.
    pub max_invariance_defect: f64,
}

/// Everything needed at one reduced point.
#[derive(Clone, Debug)]
pub struct ReducedPoint {
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    /// `g_{ab}` (equal to `G_{ab}`).
    pub g: Mat,
    /// `dg[a][(b, c)] = ∂_a g_{bc}`.
    pub dg: Vec<Mat>,
    /// `R^d_{ab}` in the orthogonal frame, `[d][a][b]`.
    pub t: Tensor,
    /// `R^j_{ab}` in the invariant frame, `[j][a][b]`.
    pub b: Tensor,
    /// `G_{ai}`.
    pub gai: Mat,
}

impl ChaplyginStructure {
    pub fn m(&self) -> usize {
        self.sys.m()
    }

    pub fn k(&self) -> usize {
        self.group.generators.len()
    }

    /// Reduced grid: the system's box restricted to the reduced coordinates.
    pub fn reduced_grid(&self, points: usize) -> Vec<Vec<f64>> {
        let lo: Vec<f64> = self.group.reduced.iter().map(|i| self.sys.domain.lo[*i]).collect();
        let hi: Vec<f64> = self.group.reduced.iter().map(|i| self.sys.domain.hi[*i]).collect();
        lattice(&lo, &hi, points)
    }

    pub fn point(&self, r: &[f64]) -> Result<ReducedPoint> {
        self.point_at(r, self.group.lift(r))
    }

    /// Reduced data evaluated at an explicit representative `q` of `r`.
    pub fn point_at(&self, r: &[f64], q: Vec<f64>) -> Result<ReducedPoint> {
        let m = self.m();
        if r.len() != m {
            return Err(Error::Invalid(format!("reduced point needs {m} coordinates")));
        }
        let pg = self.sys.geometry(&q)?;
        let fp = FramePoint::new(&self.invariant_frame, &q)?;
        let mp = MetricPoint::new(&fp, &self.sys.metric)?;
        let k = self.k();
        let mut t = Tensor::zeros(&[m, m, m]);
        let mut b = Tensor::zeros(&[k, m, m]);
        for a in 0..m {
            for c in 0..m {
                for d in 0..m {
                    t.set(&[d, a, c], pg.r(d, a, c));
                }
                for j in 0..k {
                    b.set(&[j, a, c], fp.brackets.get(m + j, a, c));
                }
            }
        }
        Ok(ReducedPoint {
            r: r.to_vec(),
            g: linalg::sub_block(&mp.gf, 0..m, 0..m),
            dg: (0..m).map(|a| linalg::sub_block(&mp.xg[a], 0..m, 0..m)).collect(),
            gai: linalg::sub_block(&mp.gf, 0..m, m..m + k),
            t,
            b,
            q,
        })
    }
}

/// Builds the invariant frame and checks `[X_a, V_i] = 0` on `points`.
pub fn build_structure(sys: &FramedSystem, points: &[Vec<f64>]) -> Result<ChaplyginStructure> {
    let group = sys
        .group
        .clone()
        .ok_or_else(|| Error::NotChaplygin("no symmetry generators declared".into()))?;
    let (m, k) = (sys.m(), group.generators.len());
    if k != sys.k() || group.reduced.len() != m {
        return Err(Error::NotChaplygin(format!(
            "need {} generators and {m} reduced coordinates",
            sys.k()
        )));
    }
    let invariant_frame = Frame {
        d: sys.frame.d.clone(),
        perp: group.generators.clone(),
        d_names: sys.frame.d_names.clone(),
        perp_names: group.generator_names.clone(),
    };
    let defects = points
        .par_iter()
        .map(|q| {
            let fp = FramePoint::new(&invariant_frame, q)?;
            let mut worst = 0.0f64;
            for a in 0..m {
                for i in 0..k {
                    for g in 0..m + k {
                        worst = worst.max(fp.brackets.get(g, a, m + i).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = defects.into_iter().fold(0.0, f64::max);
    if worst > BRACKET_TOL {
        return Err(Error::NotChaplygin(format!(
            "[X_a, V_i] does not vanish (max {worst:e})"
        )));
    }
    let reduced_coords = group.reduced.iter().map(|i| sys.space.coord_names[*i].clone()).collect();
    Ok(ChaplyginStructure {
        sys: sys.clone(),
        group,
        invariant_frame,
        reduced_coords,
        max_invariance_defect: worst,
    })
}

#[derive(Clone, Debug)]
pub struct GyroData {
    /// `R^d_{ab}`.
    pub t: Tensor,
    /// `β_b = Σ_a R^a_{ab}`.
    pub beta: Vec<f64>,
    /// `[a][b][c] = −½ R^j_{bc} G_{ja}`.
    pub xi_g: Tensor,
    /// `[b][c][a] = ⅙(−G_{bk}R^k_{ac} + G_{ck}R^k_{ab} − 2G_{ak}R^k_{bc})`.
    pub gamma_g: Tensor,
    /// `[a][b][c] = G_{bj}R^j_{ca} + G_{cj}R^j_{ab} + G_{aj}R^j_{bc}`.
    pub theta_g: Tensor,
}

/// `G_{ak} R^k_{bc}`.
fn gr(p: &ReducedPoint, a: usize, b: usize, c: usize) -> f64 {
    (0..p.gai.ncols()).map(|k| p.gai[(a, k)] * p.b.get(&[k, b, c])).sum()
}

pub fn gyro_from_point(p: &ReducedPoint) -> GyroData {
    let m = p.g.nrows();
    let beta = (0..m).map(|b| (0..m).map(|a| p.t.get(&[a, a, b])).sum()).collect();
    let mut xi_g = Tensor::zeros(&[m, m, m]);
    let mut gamma_g = Tensor::zeros(&[m, m, m]);
    let mut theta_g = Tensor::zeros(&[m, m, m]);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                xi_g.set(&[a, b, c], -0.5 * gr(p, a, b, c));
                gamma_g.set(&[b, c, a], (-gr(p, b, a, c) + gr(p, c, a, b) - 2.0 * gr(p, a, b, c)) / 6.0);
                theta_g.set(&[a, b, c], gr(p, b, c, a) + gr(p, c, a, b) + gr(p, a, b, c));
            }
        }
    }
    GyroData {
        t: p.t.clone(),
        beta,
        xi_g,
        gamma_g,
        theta_g,
    }
}

pub fn gyro_data(st: &ChaplyginStructure, r: &[f64]) -> Result<GyroData> {
    Ok(gyro_from_point(&st.point(r)?))
}

/// Largest difference of `R^d_{ab}` and `G_{ja}R^j_{bc}` between the
/// section point and a fibre-shifted representative.
pub fn invariance_residual(st: &ChaplyginStructure, r: &[f64], offset: f64) -> Result<f64> {
    let p0 = st.point(r)?;
    let p1 = st.point_at(r, st.group.shifted_lift(r, offset))?;
    let m = st.m();
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                worst = worst.max((p0.t.get(&[a, b, c]) - p1.t.get(&[a, b, c])).abs());
                worst = worst.max((gr(&p0, a, b, c) - gr(&p1, a, b, c)).abs());
            }
        }
    }
    Ok(worst)
}

/// Gradient of a scalar on the reduced space.
fn reduced_gradient(f: &FieldRef, r: &[f64]) -> Result<Vec<f64>> {
    crate::field::gradient(f.as_ref(), r)
}

/// `R^d_{ab} + φ_a δ^d_b − φ_b δ^d_a`.
pub fn phi_simplicity_residual(st: &ChaplyginStructure, phi: &FieldRef, r: &[f64]) -> Result<Tensor> {
    let p = st.point(r)?;
    let dphi = reduced_gradient(phi, r)?;
    let m = st.m();
    let mut out = Tensor::zeros(&[m, m, m]);
    for d in 0..m {
        for a in 0..m {
            for b in 0..m {
                let mut v = p.t.get(&[d, a, b]);
                if d == b {
                    v += dphi[a];
                }
                if d == a {
                    v -= dphi[b];
                }
                out.set(&[d, a, b], v);
            }
        }
    }
    Ok(out)
}

/// Lower bound on `max |phi_simplicity_residual|` over all `φ`: half the
/// spread of the values `−R^b_{ab}` (b ≠ a) that `∂_a φ` must match, and
/// the entries `R^d_{ab}` with `d ∉ {a, b}`.
pub fn phi_infeasibility(st: &ChaplyginStructure, r: &[f64]) -> Result<f64> {
    let p = st.point(r)?;
    let m = st.m();
    let mut worst = 0.0f64;
    for a in 0..m {
        let req: Vec<f64> = (0..m).filter(|b| *b != a).map(|b| -p.t.get(&[b, a, b])).collect();
        if let (Some(lo), Some(hi)) = (
            req.iter().copied().reduce(f64::min),
            req.iter().copied().reduce(f64::max),
        ) {
            worst = worst.max(0.5 * (hi - lo));
        }
        for b in 0..m {
            for d in 0..m {
                if d != a && d != b {
                    worst = worst.max(p.t.get(&[d, a, b]).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// The gradient values `∂_a φ` demanded by each bracket entry.
pub fn phi_requirements(st: &ChaplyginStructure, r: &[f64]) -> Result<Vec<Vec<f64>>> {
    let p = st.point(r)?;
    let m = st.m();
    Ok((0..m)
        .map(|a| (0..m).filter(|b| *b != a).map(|b| -p.t.get(&[b, a, b])).collect())
        .collect())
}

/// `½(G_{bk}R^k_{ac} + G_{ak}R^k_{bc} + g_{bc}f_a + g_{ac}f_b − 2g_{ab}f_c)`.
pub fn condition_ag_at(p: &ReducedPoint, df: &[f64]) -> Tensor {
    let m = p.g.nrows();
    let g = &p.g;
    let mut out = Tensor::zeros(&[m, m, m]);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let v = gr(p, b, a, c) + gr(p, a, b, c) + g[(b, c)] * df[a] + g[(a, c)] * df[b]
                    - 2.0 * g[(a, b)] * df[c];
                out.set(&[a, b, c], 0.5 * v);
            }
        }
    }
    out
}

pub fn condition_ag_residual(st: &ChaplyginStructure, f: &FieldRef, r: &[f64]) -> Result<Tensor> {
    let p = st.point(r)?;
    Ok(condition_ag_at(&p, &reduced_gradient(f, r)?))
}

/// Largest entry of the (A′)^G residual restricted to pairwise distinct
/// index triples.
pub fn condition_ag_distinct(t: &Tensor) -> f64 {
    let m = t.dims[0];
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                if a != b && b != c && a != c {
                    worst = worst.max(t.get(&[a, b, c]).abs());
                }
            }
        }
    }
    worst
}

pub fn beta_at(st: &ChaplyginStructure, r: &[f64]) -> Result<Vec<f64>> {
    Ok(gyro_data(st, r)?.beta)
}

/// `max |∂_a β_b − ∂_b β_a|` by central differences.
pub fn dbeta_norm(st: &ChaplyginStructure, r: &[f64]) -> Result<f64> {
    let m = st.m();
    let h = 1e3 * fd_step(r);
    let mut jac = Mat::zeros(m, m);
    for a in 0..m {
        let mut rp = r.to_vec();
        let mut rm = r.to_vec();
        rp[a] += h;
        rm[a] -= h;
        let bp = beta_at(st, &rp)?;
        let bm = beta_at(st, &rm)?;
        for b in 0..m {
            jac[(a, b)] = (bp[b] - bm[b]) / (2.0 * h);
        }
    }
    Ok((&jac - jac.transpose()).amax())
}

/// `f(target) − f(base)` from `β = (m−1) df`, integrated along the straight
/// segment and cross-checked along a coordinate staircase.
pub fn recover_f(st: &ChaplyginStructure, base: &[f64], target: &[f64]) -> Result<f64> {
    let m = st.m();
    if m < 2 {
        return Err(Error::Unsupported("recovering f needs at least two constraint fields".into()));
    }
    let scale = 1.0 / (m as f64 - 1.0);
    let w = |r: &[f64]| -> Result<Vec<f64>> { Ok(beta_at(st, r)?.into_iter().map(|b| b * scale).collect()) };
    let straight = quadrature::line_integral(w, &[base.to_vec(), target.to_vec()], QUADRATURE_NODES)?;
    let mut stairs = vec![base.to_vec()];
    let mut cur = base.to_vec();
    for a in 0..m {
        cur[a] = target[a];
        stairs.push(cur.clone());
    }
    let bent = quadrature::line_integral(w, &stairs, QUADRATURE_NODES)?;
    let gap = (straight - bent).abs();
    if gap > 1e-6 {
        return Err(Error::NonIntegrable(gap));
    }
    Ok(straight)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[allow(non_camel_case_types)]
pub enum Level {
    GEODESIC_EXT_F0,
    PHI_SIMPLE,
    ORTHO_PROJECTIVE_EXT,
    INVARIANT_MEASURE_ONLY,
    NONE,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Level::GEODESIC_EXT_F0 => "GEODESIC_EXT_F0",
            Level::PHI_SIMPLE => "PHI_SIMPLE",
            Level::ORTHO_PROJECTIVE_EXT => "ORTHO_PROJECTIVE_EXT",
            Level::INVARIANT_MEASURE_ONLY => "INVARIANT_MEASURE_ONLY",
            Level::NONE => "NONE",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub system: String,
    pub level: Level,
    pub tolerance: f64,
    pub residuals: BTreeMap<String, f64>,
    /// Tier pass flags keyed `i`..`iv`.
    pub tiers: BTreeMap<String, bool>,
    /// Residual names within a factor two of the tolerance.
    pub marginal: Vec<String>,
    pub points: usize,
    pub labels: Vec<String>,
    /// `(reduced point, f − f(first point))`.
    pub f_recovered: Option<Vec<(Vec<f64>, f64)>>,
}

/// Wedge residuals `(β_b g_{ac} − β_c g_{ab})/(m−1) − 2·Ξ^G_{abc}` and the
/// same against `2·γ^G_{bca}`.
fn wedge_residuals(p: &ReducedPoint, gd: &GyroData) -> (f64, f64) {
    let m = p.g.nrows();
    let s = if m > 1 { 1.0 / (m as f64 - 1.0) } else { 0.0 };
    let (mut wx, mut wg) = (0.0f64, 0.0f64);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let wedge = s * (gd.beta[b] * p.g[(a, c)] - gd.beta[c] * p.g[(a, b)]);
                wx = wx.max((wedge - 2.0 * gd.xi_g.get(&[a, b, c])).abs());
                wg = wg.max((wedge - 2.0 * gd.gamma_g.get(&[b, c, a])).abs());
            }
        }
    }
    (wx, wg)
}

pub fn classify(st: &ChaplyginStructure, grid: &[Vec<f64>], tol: f64) -> Result<ClassificationReport> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty reduced grid".into()));
    }
    if tol <= 0.0 {
        return Err(Error::Invalid("tolerance must be positive".into()));
    }
    let rows = grid
        .par_iter()
        .map(|r| {
            let p = st.point(r)?;
            let gd = gyro_from_point(&p);
            let (wx, wg) = wedge_residuals(&p, &gd);
            Ok([
                linalg::inf_norm(&gd.beta),
                dbeta_norm(st, r)?,
                wx,
                wg,
                gd.theta_g.max_abs(),
                gd.xi_g.max_abs(),
                gd.gamma_g.max_abs(),
            ])
        })
        .collect::<Result<Vec<[f64; 7]>>>()?;
    let names = [
        "beta_norm",
        "dbeta_norm",
        "wedge_vs_XiG",
        "wedge_vs_gammaG",
        "ThetaG_norm",
        "XiG_norm",
        "gammaG_norm",
    ];
    let mut residuals = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let v = rows.iter().map(|r| r[i]).fold(0.0, f64::max);
        residuals.insert(name.to_string(), v);
    }
    let ok = |name: &str| residuals[name] <= tol;
    let mut tiers = BTreeMap::new();
    tiers.insert("i".to_string(), ok("beta_norm") && ok("XiG_norm"));
    tiers.insert("ii".to_string(), ok("dbeta_norm") && ok("wedge_vs_XiG"));
    tiers.insert("iii".to_string(), ok("dbeta_norm") && ok("wedge_vs_gammaG"));
    tiers.insert("iv".to_string(), ok("dbeta_norm"));
    let level = if tiers["i"] {
        Level::GEODESIC_EXT_F0
    } else if tiers["ii"] {
        Level::PHI_SIMPLE
    } else if tiers["iii"] {
        Level::ORTHO_PROJECTIVE_EXT
    } else if tiers["iv"] {
        Level::INVARIANT_MEASURE_ONLY
    } else {
        Level::NONE
    };
    let marginal = residuals
        .iter()
        .filter(|(_, v)| **v > 0.5 * tol && **v <= 2.0 * tol)
        .map(|(k, _)| k.clone())
        .collect();
    let f_recovered = if tiers["iv"] && st.m() >= 2 {
        let base = &grid[0];
        let vals = grid
            .par_iter()
            .map(|r| Ok((r.clone(), recover_f(st, base, r)?)))
            .collect::<Result<Vec<_>>>();
        vals.ok()
    } else {
        None
    };
    Ok(ClassificationReport {
        system: st.sys.name.clone(),
        level,
        tolerance: tol,
        residuals,
        tiers,
        marginal,
        points: grid.len(),
        labels: st.sys.labels.clone(),
        f_recovered,
    })
}

/// `g_{db} R^d_{ac} v^a v^b` indexed by `c` (equal to `−α_c`).
fn gyro_force(p: &ReducedPoint, v: &[f64]) -> Vector {
    let m = p.g.nrows();
    Vector::from_fn(m, |c, _| {
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                let w = v[a] * v[b];
                if w == 0.0 {
                    continue;
                }
                for d in 0..m {
                    s += p.g[(d, b)] * p.t.get(&[d, a, c]) * w;
                }
            }
        }
        s
    })
}

/// Lowered coordinate Christoffel contraction `Γ_{c,ab} v^a v^b` of `g_red`.
fn christoffel_lowered(p: &ReducedPoint, v: &[f64]) -> Vector {
    let m = p.g.nrows();
    Vector::from_fn(m, |c, _| {
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += 0.5 * (p.dg[a][(b, c)] + p.dg[b][(a, c)] - p.dg[c][(a, b)]) * v[a] * v[b];
            }
        }
        s
    })
}

/// Gyroscopic one-form `α_c = −g_{db} R^d_{ac} v^a v^b`.
pub fn gyroscopic_alpha(st: &ChaplyginStructure, r: &[f64], v: &[f64]) -> Result<Vector> {
    Ok(-gyro_force(&st.point(r)?, v))
}

/// `ι_Γ γ^G` and `ι_Γ Ξ^G` at a reduced state.
pub fn contracted_forms(st: &ChaplyginStructure, r: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
    let gd = gyro_data(st, r)?;
    let m = st.m();
    let mut ig = Vector::zeros(m);
    let mut ix = Vector::zeros(m);
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                let w = v[a] * v[b];
                ig[c] += 2.0 * gd.gamma_g.get(&[b, c, a]) * w;
                ix[c] += 2.0 * gd.xi_g.get(&[a, b, c]) * w;
            }
        }
    }
    Ok((ig, ix))
}

fn reduced_accel(p: &ReducedPoint, v: &[f64]) -> Result<Vector> {
    let rhs = gyro_force(p, v) - christoffel_lowered(p, v);
    linalg::solve_metric(&p.g, &rhs)
}

/// Accelerations of the reduced second-order system.
pub fn reduced_field(st: &ChaplyginStructure, r: &[f64], v: &[f64]) -> Result<Vector> {
    reduced_accel(&st.point(r)?, v)
}

/// Reduced dynamics as a flow on `T(Q/G)`.
pub struct ReducedFlow<'a> {
    pub st: &'a ChaplyginStructure,
}

impl Flow for ReducedFlow<'_> {
    fn nq(&self) -> usize {
        self.st.m()
    }
    fn nv(&self) -> usize {
        self.st.m()
    }
    fn rhs(&self, q: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        Ok((Vector::from_column_slice(v), reduced_field(self.st, q, v)?))
    }
    fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        let p = self.st.point(q)?;
        let vv = Vector::from_column_slice(v);
        Ok(0.5 * vv.dot(&(&p.g * &vv)))
    }
    fn coord_names(&self) -> Vec<String> {
        self.st.reduced_coords.clone()
    }
    fn vel_names(&self) -> Vec<String> {
        self.st.sys.frame.d_names.clone()
    }
}

/// `|div|` of the reduced field with density `e^{(m−1)f} det g_{ab}`.
pub fn invariant_measure_residual(st: &ChaplyginStructure, f: &FieldRef, r: &[f64], v: &[f64]) -> Result<f64> {
    let m = st.m();
    let mu = |r: &[f64]| -> Result<f64> {
        let p = st.point(r)?;
        Ok(((m as f64 - 1.0) * f.eval(r)?[0]).exp() * p.g.determinant())
    };
    let h = 1e3 * fd_step(r);
    let mut div = 0.0;
    for a in 0..m {
        let mut rp = r.to_vec();
        let mut rm = r.to_vec();
        rp[a] += h;
        rm[a] -= h;
        div += v[a] * (mu(&rp)? - mu(&rm)?) / (2.0 * h);
    }
    let p = st.point(r)?;
    let mu0 = ((m as f64 - 1.0) * f.eval(r)?[0]).exp() * p.g.determinant();
    let hv = 1e3 * fd_step(v);
    for a in 0..m {
        let mut vp = v.to_vec();
        let mut vm = v.to_vec();
        vp[a] += hv;
        vm[a] -= hv;
        div += mu0 * (reduced_accel(&p, &vp)?[a] - reduced_accel(&p, &vm)?[a]) / (2.0 * hv);
    }
    Ok(div.abs())
}

/// Geodesic acceleration of `k = e^{2f} g_red`.
fn conformal_accel(p: &ReducedPoint, df: &[f64], v: &[f64]) -> Result<Vector> {
    let vv = Vector::from_column_slice(v);
    let lc = -linalg::solve_metric(&p.g, &christoffel_lowered(p, v))?;
    let fv: f64 = df.iter().zip(v).map(|(a, b)| a * b).sum();
    let grad = linalg::solve_metric(&p.g, &Vector::from_column_slice(df))?;
    let norm2 = vv.dot(&(&p.g * &vv));
    Ok(lc - &vv * (2.0 * fv) + grad * norm2)
}

/// `q̈_k + Γ^red(f) q̇ − q̈_red`, zero when the reduced spray is the
/// geodesic spray of `e^{2f} g_red` plus `Γ^red(f) Δ`.
pub fn hamiltonization_residual(st: &ChaplyginStructure, f: &FieldRef, r: &[f64], v: &[f64]) -> Result<Vector> {
    let p = st.point(r)?;
    let df = reduced_gradient(f, r)?;
    let fv: f64 = df.iter().zip(v).map(|(a, b)| a * b).sum();
    let k = conformal_accel(&p, &df, v)?;
    let red = reduced_accel(&p, v)?;
    Ok(k + Vector::from_column_slice(v) * fv - red)
}

/// `dψ(e^{−f} Γ^red(x)) − Γ^k(ψ(x))` with `ψ(q, v) = (q, e^{−f} v)`,
/// velocity components.
pub fn psi_relatedness_residual(st: &ChaplyginStructure, f: &FieldRef, r: &[f64], v: &[f64]) -> Result<Vector> {
    let p = st.point(r)?;
    let df = reduced_gradient(f, r)?;
    let s = (-f.eval(r)?[0]).exp();
    let vv = Vector::from_column_slice(v);
    let red = reduced_accel(&p, v)?;
    // Tangent of the rescaled field e^{−f}(v, A) pushed through ψ.
    let qdot = &vv * s;
    let fdot: f64 = df.iter().zip(qdot.iter()).map(|(a, b)| a * b).sum();
    let wdot = (&red * s) * s - &vv * (s * fdot);
    let w: Vec<f64> = (&vv * s).iter().copied().collect();
    let target = conformal_accel(&p, &df, &w)?;
    Ok(wdot - target)
}

/// `Γ^nh(ν_a v^a) = X_b(ν_a) v^b v^a + ν_a v̇^a`; `ν` is a field on `Q/G`
/// (m inputs) or on `Q`.
pub fn first_integral_residual(sys: &FramedSystem, nu: &FieldRef, s: &State) -> Result<f64> {
    let m = sys.m();
    let (qd, vd) = NonholonomicFlow::new(sys).rhs(&s.q, &s.v)?;
    let (x, xd): (Vec<f64>, Vec<f64>) = if nu.dim_in() == sys.n() {
        (s.q.clone(), qd.iter().copied().collect())
    } else {
        let g = sys.group.as_ref().ok_or_else(|| Error::Unsupported("system has no symmetry group".into()))?;
        (g.project(&s.q), g.reduced.iter().map(|i| qd[*i]).collect())
    };
    let val = nu.eval(&x)?;
    let jac = nu.jacobian(&x)?;
    let mut out = 0.0;
    for a in 0..m {
        let dnu: f64 = (0..x.len()).map(|mu| jac[(a, mu)] * xd[mu]).sum();
        out += dnu * s.v[a] + val[a] * vd[a];
    }
    Ok(out)
}

/// `ḡ_{ak} = −G_{ak} + e^{−F} ν_a` at the pinned `k`, `ḡ_{ai} = −G_{ai}`
/// otherwise.
pub fn candidate_from_first_integral(
    st: &ChaplyginStructure,
    nu: FieldRef,
    f: FieldRef,
    pinned: usize,
    points: &[Vec<f64>],
) -> Result<Candidate> {
    let (m, k, n) = (st.m(), st.k(), st.sys.n());
    if pinned >= k {
        return Err(Error::Invalid(format!("pinned index {pinned} out of range")));
    }
    let group = st.group.clone();
    let on_reduced = nu.dim_in() != n;
    let eval_nu = {
        let nu = nu.clone();
        move |q: &[f64]| -> Result<Vec<f64>> {
            if on_reduced {
                nu.eval(&group.project(q))
            } else {
                nu.eval(q)
            }
        }
    };
    for q in points {
        if linalg::inf_norm(&eval_nu(q)?) <= 1e-12 {
            return Err(Error::NotPositive);
        }
    }
    let sys = st.sys.clone();
    let f2 = f.clone();
    let gbar = FnField::new(n, m * k, move |q| {
        let gg = vertical_coupling(&sys, q)?;
        let nv = eval_nu(q)?;
        let e = (-f2.eval(q)?[0]).exp();
        let mut out = vec![0.0; m * k];
        for a in 0..m {
            for i in 0..k {
                out[a * k + i] = -gg[(a, i)] + if i == pinned { e * nv[a] } else { 0.0 };
            }
        }
        Ok(out)
    })
    .arc();
    Ok(Candidate::new(gbar, f))
}

/// The (V π, D)-orthogonal candidate `ḡ_{ai} = −G_{ai}` with `F = f∘π`.
pub fn orthogonal_candidate(st: &ChaplyginStructure, f: FieldRef) -> Candidate {
    let (m, k, n) = (st.m(), st.k(), st.sys.n());
    let sys = st.sys.clone();
    let gbar = FnField::new(n, m * k, move |q| {
        let gg = vertical_coupling(&sys, q)?;
        Ok((0..m * k).map(|x| -gg[(x / k, x % k)]).collect())
    })
    .arc();
    let group = st.group.clone();
    let f2 = f.clone();
    let reduced = group.reduced.clone();
    let fq = FnField::new(n, 1, move |q| f.eval(&group.project(q)))
        .with_jacobian(move |q| {
            let r: Vec<f64> = reduced.iter().map(|i| q[*i]).collect();
            let j = f2.jacobian(&r)?;
            let mut out = Mat::zeros(1, n);
            for (a, i) in reduced.iter().enumerate() {
                out[(0, *i)] = j[(0, a)];
            }
            Ok(out)
        })
        .arc();
    Candidate::new(gbar, fq)
}

/// Identity `g_{ce} R^c_{ab} = G_{ej} R^j_{ab}` at a reduced point.
pub fn curvature_identity_residual(st: &ChaplyginStructure, r: &[f64]) -> Result<f64> {
    let p = st.point(r)?;
    let m = st.m();
    let mut worst = 0.0f64;
    for e in 0..m {
        for a in 0..m {
            for b in 0..m {
                let lhs: f64 = (0..m).map(|c| p.g[(c, e)] * p.t.get(&[c, a, b])).sum();
                worst = worst.max((lhs - gr(&p, e, a, b)).abs());
            }
        }
    }
    Ok(worst)
}
