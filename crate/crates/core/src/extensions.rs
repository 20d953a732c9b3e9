//! Conditions (A′) and (B′) for D-conformal candidates `(ḡ_{ai}, F)`,
//! metric completion and end-to-end pregeodesic checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::chaplygin::vertical_coupling;
use crate::dynamics::{integrate, IntegrateOpts, NonholonomicFlow, State, Trajectory, Flow};
use crate::error::{Error, Result};
use crate::field::{Field, FieldRef, FnField};
use crate::geometry::{frame_matrix, lowered_christoffel, Frame, Metric, PointGeometry};
use crate::linalg::{self, Mat, Vector};
use crate::system::FramedSystem;

pub const DEFAULT_TOL: f64 = 1e-6;

/// Dense array with named axes, used for residual tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (i, d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        linalg::inf_norm(&self.data)
    }

    /// Multi-index of the largest entry in absolute value.
    pub fn argmax(&self) -> Vec<usize> {
        let mut best = 0;
        for (i, x) in self.data.iter().enumerate() {
            if x.abs() > self.data[best].abs() {
                best = i;
            }
        }
        let mut idx = vec![0; self.dims.len()];
        let mut r = best;
        for (k, d) in self.dims.iter().enumerate().rev() {
            idx[k] = r % d;
            r /= d;
        }
        idx
    }
}

/// A D-conformal candidate: off-diagonal block `ḡ_{ai}` (row-major, `m·k`
/// components), conformal factor `F`, optional complement block `ḡ_{ij}`.
#[derive(Clone)]
pub struct Candidate {
    pub gbar_ai: FieldRef,
    pub f: FieldRef,
    pub gbar_ij: Option<FieldRef>,
}

impl std::fmt::Debug for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Candidate(len={}, gbar_ij={})", self.gbar_ai.len(), self.gbar_ij.is_some())
    }
}

impl Candidate {
    pub fn new(gbar_ai: FieldRef, f: FieldRef) -> Self {
        Candidate {
            gbar_ai,
            f,
            gbar_ij: None,
        }
    }

    /// Entries keyed by `(a, i)` frame names; missing entries are zero.
    pub fn from_exprs(sys: &FramedSystem, gbar: &[((String, String), String)], f: &str) -> Result<Self> {
        let (m, k) = (sys.m(), sys.k());
        let mut srcs = vec!["0".to_string(); m * k];
        for ((a, i), e) in gbar {
            let ai = sys
                .frame
                .d_names
                .iter()
                .position(|x| x == a)
                .ok_or_else(|| Error::Invalid(format!("`{a}` is not a constraint field name")))?;
            let ii = sys
                .frame
                .perp_names
                .iter()
                .position(|x| x == i)
                .ok_or_else(|| Error::Invalid(format!("`{i}` is not a complement field name")))?;
            srcs[ai * k + ii] = e.clone();
        }
        let refs: Vec<&str> = srcs.iter().map(String::as_str).collect();
        let coords = &sys.space.coord_names;
        Ok(Candidate::new(
            crate::field::ExprField::parse(&refs, coords, &sys.params)?.arc(),
            crate::field::ExprField::parse(&[f], coords, &sys.params)?.arc(),
        ))
    }

    pub fn with_gbar_ij(mut self, g: FieldRef) -> Self {
        self.gbar_ij = Some(g);
        self
    }

    /// Same candidate with `F + c`.
    pub fn shifted(&self, c: f64) -> Candidate {
        let f = self.f.clone();
        let n = f.dim_in();
        let f2 = f.clone();
        Candidate {
            gbar_ai: self.gbar_ai.clone(),
            f: FnField::new(n, 1, move |q| Ok(vec![f.eval(q)?[0] + c]))
                .with_jacobian(move |q| f2.jacobian(q))
                .arc(),
            gbar_ij: self.gbar_ij.clone(),
        }
    }
}

/// Candidate data in the frame at one point.
struct CandPoint {
    gbar: Mat,
    /// `xgbar[α][(a, i)] = X_α(ḡ_{ai})`.
    xgbar: Vec<Mat>,
    /// `X_α(F)`.
    df: Vec<f64>,
}

fn cand_point(pg: &PointGeometry, cand: &Candidate, with_derivs: bool) -> Result<CandPoint> {
    let (m, n) = (pg.m(), pg.n());
    let k = n - m;
    let q = &pg.frame.q;
    let gbar = Mat::from_row_slice(m, k, &cand.gbar_ai.eval(q)?);
    let grad = cand.f.jacobian(q)?;
    let grad: Vec<f64> = grad.row(0).iter().copied().collect();
    let df = pg.frame.frame_gradient(&grad);
    let xgbar = if with_derivs {
        let j = cand.gbar_ai.jacobian(q)?;
        (0..n)
            .map(|alpha| {
                Mat::from_fn(m, k, |a, i| {
                    (0..n).map(|mu| pg.frame.e[(mu, alpha)] * j[(a * k + i, mu)]).sum()
                })
            })
            .collect()
    } else {
        vec![]
    };
    Ok(CandPoint { gbar, xgbar, df })
}

/// Coefficients `S_{abc} = ½ T_{abc}` of (A′) with
/// `T_{abc} = ḡ_{bk}R^k_{ac} + ḡ_{ak}R^k_{bc} − g_{bc}F_a − g_{ac}F_b + 2g_{ab}F_c`.
pub fn condition_a_at(pg: &PointGeometry, cand: &Candidate) -> Result<Tensor> {
    let (m, n) = (pg.m(), pg.n());
    let cp = cand_point(pg, cand, false)?;
    let g = &pg.metric.gf;
    let mut t = Tensor::zeros(&[m, m, m]);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let mut s = 0.0;
                for kk in m..n {
                    s += cp.gbar[(b, kk - m)] * pg.r(kk, a, c) + cp.gbar[(a, kk - m)] * pg.r(kk, b, c);
                }
                s += -g[(b, c)] * cp.df[a] - g[(a, c)] * cp.df[b] + 2.0 * g[(a, b)] * cp.df[c];
                t.set(&[a, b, c], 0.5 * s);
            }
        }
    }
    Ok(t)
}

pub fn condition_a_residual(sys: &FramedSystem, cand: &Candidate, q: &[f64]) -> Result<Tensor> {
    condition_a_at(&sys.geometry(q)?, cand)
}

/// Symmetrized coefficients `B_{iab}` of (B′) in `v^a v^b`.
pub fn condition_b_at(pg: &PointGeometry, cand: &Candidate) -> Result<Tensor> {
    let (m, n) = (pg.m(), pg.n());
    let k = n - m;
    let cp = cand_point(pg, cand, true)?;
    let g = &pg.metric.gf;
    let low = pg.lowered_d();
    // Γ^d_(ab) on the D-block.
    let gab_inv = linalg::inverse(&pg.g_ab()).ok_or(Error::DegenerateMetric)?;
    let gamma = |d: usize, a: usize, b: usize| -> f64 { (0..m).map(|e| gab_inv[(d, e)] * low.get(e, a, b)).sum() };
    let mut t = Tensor::zeros(&[k, m, m]);
    for i in 0..k {
        let ii = m + i;
        for a in 0..m {
            for b in a..m {
                let sym = |f: &dyn Fn(usize, usize) -> f64| 0.5 * (f(a, b) + f(b, a));
                let xg = sym(&|a, b| cp.xgbar[a][(b, i)]);
                let conn: f64 = (0..m).map(|d| cp.gbar[(d, i)] * gamma(d, a, b)).sum();
                let lam = low.get(ii, a, b);
                let rot = sym(&|a, b| (m..n).map(|kk| cp.gbar[(b, kk - m)] * pg.r(kk, ii, a)).sum());
                let conf = sym(&|a, b| cp.gbar[(b, i)] * cp.df[a]);
                let v = xg - conn + lam + rot + conf - g[(a, b)] * cp.df[ii];
                t.set(&[i, a, b], v);
                t.set(&[i, b, a], v);
            }
        }
    }
    Ok(t)
}

pub fn condition_b_residual(sys: &FramedSystem, cand: &Candidate, q: &[f64]) -> Result<Tensor> {
    condition_b_at(&sys.geometry(q)?, cand)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst_point: Vec<f64>,
    pub worst_indices: Vec<usize>,
    #[serde(skip)]
    pub per_point: Vec<(Vec<f64>, f64)>,
}

impl ResidualReport {
    pub fn from_tensors(points: &[Vec<f64>], tensors: Vec<Tensor>, tol: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("empty sample grid".into()));
        }
        let mut rep = ResidualReport {
            max_abs: 0.0,
            tolerance: tol,
            pass: true,
            worst_point: points[0].clone(),
            worst_indices: vec![],
            per_point: Vec::with_capacity(points.len()),
        };
        let mut first = true;
        for (q, t) in points.iter().zip(tensors) {
            let v = t.max_abs();
            if first || v > rep.max_abs {
                rep.max_abs = v;
                rep.worst_point = q.clone();
                rep.worst_indices = t.argmax();
                first = false;
            }
            rep.per_point.push((q.clone(), v));
        }
        rep.pass = rep.max_abs <= tol;
        Ok(rep)
    }
}

/// Evaluates a pointwise residual over `points` in parallel, in order.
pub fn sweep_points<F>(points: &[Vec<f64>], tol: f64, f: F) -> Result<ResidualReport>
where
    F: Fn(&[f64]) -> Result<Tensor> + Sync,
{
    let tensors: Vec<Tensor> = points.par_iter().map(|q| f(q)).collect::<Result<_>>()?;
    ResidualReport::from_tensors(points, tensors, tol)
}

pub fn condition_a_report(sys: &FramedSystem, cand: &Candidate, points: &[Vec<f64>], tol: f64) -> Result<ResidualReport> {
    sweep_points(points, tol, |q| condition_a_residual(sys, cand, q))
}

pub fn condition_b_report(sys: &FramedSystem, cand: &Candidate, points: &[Vec<f64>], tol: f64) -> Result<ResidualReport> {
    sweep_points(points, tol, |q| condition_b_residual(sys, cand, q))
}

/// Transport residual `d/dt C_i + (dF/dt) C_i` with
/// `C_i = (ḡ_{ai} + G_{ai}) v^a`, differentiated along a sampled
/// trajectory by a five-point stencil. Returns the worst value per `i`.
pub fn chaplygin_b_residual(sys: &FramedSystem, cand: &Candidate, traj: &Trajectory) -> Result<Vec<f64>> {
    if sys.group.is_none() {
        return Err(Error::Unsupported("system has no symmetry group".into()));
    }
    let (m, k) = (sys.m(), sys.k());
    let n = traj.len();
    if n < 5 {
        return Err(Error::Invalid("trajectory needs at least five samples".into()));
    }
    let h = traj.times[1] - traj.times[0];
    for w in traj.times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300) {
            return Err(Error::Invalid("trajectory must be uniformly sampled".into()));
        }
    }
    let samples: Vec<(Vec<f64>, f64)> = traj
        .states
        .par_iter()
        .map(|s| {
            let gv = Mat::from_row_slice(m, k, &cand.gbar_ai.eval(&s.q)?);
            let gg = vertical_coupling(sys, &s.q)?;
            let c: Vec<f64> = (0..k)
                .map(|i| (0..m).map(|a| (gv[(a, i)] + gg[(a, i)]) * s.v[a]).sum())
                .collect();
            let pg = sys.geometry(&s.q)?;
            let grad = cand.f.jacobian(&s.q)?;
            let grad: Vec<f64> = grad.row(0).iter().copied().collect();
            let df = pg.frame.frame_gradient(&grad);
            let fdot: f64 = (0..m).map(|a| df[a] * s.v[a]).sum();
            Ok((c, fdot))
        })
        .collect::<Result<_>>()?;
    let mut worst = vec![0.0f64; k];
    for t in 2..n - 2 {
        for (i, w) in worst.iter_mut().enumerate() {
            let c = |j: usize| samples[j].0[i];
            let dc = (c(t - 2) - 8.0 * c(t - 1) + 8.0 * c(t + 1) - c(t + 2)) / (12.0 * h);
            *w = w.max((dc + samples[t].1 * c(t)).abs());
        }
    }
    Ok(worst)
}

pub const COMPLETION_MARGIN: f64 = 1e-6;
pub const COMPLETION_MAX_EXPONENT: i32 = 10;

#[derive(Clone, Debug, Serialize)]
pub struct BlockCheck {
    pub eigenvalues: Vec<f64>,
    pub positive_definite: bool,
}

/// Eigenvalues and Cholesky verdict for an explicit symmetric block.
pub fn check_block(m: &Mat) -> BlockCheck {
    BlockCheck {
        eigenvalues: linalg::sym_eigenvalues(m),
        positive_definite: linalg::is_positive_definite(m),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CompletionReference {
    /// `ḡ_{ij}` was supplied by the candidate.
    Supplied,
    /// Scaled complement block of the original metric.
    MetricBlock,
    /// Scaled identity, used when the original complement block is not
    /// positive definite.
    Identity,
}

/// The completed metric `e^{2F} ḡ`, expressed in coordinates.
#[derive(Clone)]
pub struct CompletedMetric {
    pub frame: Frame,
    pub base: Metric,
    pub cand: Candidate,
    pub scale: f64,
    pub reference: CompletionReference,
    pub worst_eigenvalue: f64,
}

impl std::fmt::Debug for CompletedMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompletedMetric")
            .field("scale", &self.scale)
            .field("reference", &self.reference)
            .field("worst_eigenvalue", &self.worst_eigenvalue)
            .finish()
    }
}

impl CompletedMetric {
    /// Frame components of `ḡ` (without the conformal factor).
    pub fn gbar_frame(&self, q: &[f64]) -> Result<Mat> {
        let e = frame_matrix(&self.frame, q)?;
        let g = self.base.at(q)?;
        gbar_frame_from(&e, &g, &self.frame, &self.cand, self.scale, self.reference, q)
    }

    pub fn frame_components(&self, q: &[f64]) -> Result<Mat> {
        let f = self.cand.f.eval(q)?[0];
        Ok(self.gbar_frame(q)? * (2.0 * f).exp())
    }

    pub fn metric(&self) -> Metric {
        Metric::new(std::sync::Arc::new(self.clone()))
    }
}

fn gbar_frame_from(
    e: &Mat,
    g: &Mat,
    frame: &Frame,
    cand: &Candidate,
    scale: f64,
    reference: CompletionReference,
    q: &[f64],
) -> Result<Mat> {
    let (m, n) = (frame.m(), frame.n());
    let k = n - m;
    let gf = e.transpose() * g * e;
    let gab = linalg::sub_block(&gf, 0..m, 0..m);
    let gai = Mat::from_row_slice(m, k, &cand.gbar_ai.eval(q)?);
    let gij = match reference {
        CompletionReference::Supplied => {
            let f = cand.gbar_ij.as_ref().ok_or_else(|| Error::Invalid("no supplied block".into()))?;
            Mat::from_row_slice(k, k, &f.eval(q)?)
        }
        _ => {
            let sol = linalg::solve_mat(&gab, &gai).ok_or(Error::DegenerateMetric)?;
            let base = gai.transpose() * sol;
            let refm = if reference == CompletionReference::MetricBlock {
                linalg::sub_block(&gf, m..n, m..n)
            } else {
                Mat::identity(k, k)
            };
            base + refm * scale
        }
    };
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (m, m)).copy_from(&gab);
    out.view_mut((0, m), (m, k)).copy_from(&gai);
    out.view_mut((m, 0), (k, m)).copy_from(&gai.transpose());
    out.view_mut((m, m), (k, k)).copy_from(&((&gij + gij.transpose()) * 0.5));
    Ok(out)
}

impl Field for CompletedMetric {
    fn dim_in(&self) -> usize {
        self.frame.n()
    }
    fn len(&self) -> usize {
        self.frame.n() * self.frame.n()
    }
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let e = frame_matrix(&self.frame, q)?;
        let einv = linalg::inverse(&e).ok_or(Error::DegenerateFrame)?;
        let g = self.base.at(q)?;
        let f = self.cand.f.eval(q)?[0];
        let gf = gbar_frame_from(&e, &g, &self.frame, &self.cand, self.scale, self.reference, q)? * (2.0 * f).exp();
        let gc = einv.transpose() * gf * &einv;
        // Row-major.
        Ok(gc.transpose().as_slice().to_vec())
    }
}

/// Completes a candidate to `ĝ = e^{2F} ḡ` with
/// `ḡ_{ij} = ḡ_{ia} g^{ab} ḡ_{bj} + s·ref`, `s` the smallest power of two
/// giving a Schur margin of `COMPLETION_MARGIN` on `points`, and verifies
/// Cholesky of the completed frame block there.
pub fn complete_metric(sys: &FramedSystem, cand: &Candidate, points: &[Vec<f64>]) -> Result<CompletedMetric> {
    if points.is_empty() {
        return Err(Error::Invalid("empty sample grid".into()));
    }
    let (m, n) = (sys.m(), sys.n());
    let mut c = CompletedMetric {
        frame: sys.frame.clone(),
        base: sys.metric.clone(),
        cand: cand.clone(),
        scale: 1.0,
        reference: CompletionReference::Supplied,
        worst_eigenvalue: f64::INFINITY,
    };
    if cand.gbar_ij.is_none() {
        // Smallest eigenvalue of the reference block over the grid.
        let mut ref_min = f64::INFINITY;
        for q in points {
            let pg = sys.geometry(q)?;
            ref_min = ref_min.min(linalg::min_eigenvalue(&linalg::sub_block(&pg.metric.gf, m..n, m..n)));
        }
        c.reference = if ref_min > 0.0 {
            CompletionReference::MetricBlock
        } else {
            ref_min = 1.0;
            CompletionReference::Identity
        };
        let mut found = None;
        for e in 0..=COMPLETION_MAX_EXPONENT {
            let s = 2f64.powi(e);
            if s * ref_min >= COMPLETION_MARGIN {
                found = Some(s);
                break;
            }
        }
        c.scale = found.ok_or(Error::CompletionFailed(2f64.powi(COMPLETION_MAX_EXPONENT) * ref_min))?;
    }
    let worst = points
        .par_iter()
        .map(|q| {
            let gf = c.frame_components(q)?;
            Ok(if linalg::is_positive_definite(&gf) {
                linalg::min_eigenvalue(&gf)
            } else {
                linalg::min_eigenvalue(&gf).min(0.0)
            })
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    c.worst_eigenvalue = worst;
    if worst <= 0.0 {
        return Err(Error::CompletionFailed(worst));
    }
    Ok(c)
}

/// `(a-part, i-part)`: nonholonomic acceleration minus the projective
/// geodesic acceleration with `P = X_d(F) v^d`, and `Γ̂^i_{bc} v^b v^c`.
pub fn pregeodesic_residual(sys: &FramedSystem, ghat: &Metric, f: &FieldRef, s: &State) -> Result<(Vector, Vector)> {
    let (m, n) = (sys.m(), sys.n());
    let (_, vd) = NonholonomicFlow::new(sys).rhs(&s.q, &s.v)?;
    let pg = PointGeometry::new(&sys.frame, ghat, &s.q)?;
    let mut vfull = s.v.clone();
    vfull.resize(n, 0.0);
    let low = lowered_christoffel(&pg.frame, &pg.metric, m).contract(&vfull);
    let gam = linalg::solve_metric(&pg.metric.gf, &low)?;
    let grad = f.jacobian(&s.q)?;
    let grad: Vec<f64> = grad.row(0).iter().copied().collect();
    let df = pg.frame.frame_gradient(&grad);
    let p: f64 = (0..m).map(|d| df[d] * s.v[d]).sum();
    let a = Vector::from_fn(m, |a, _| vd[a] - (-gam[a] + p * s.v[a]));
    let i = Vector::from_fn(n - m, |i, _| gam[m + i]);
    Ok((a, i))
}

/// Worst pregeodesic residual along a nonholonomic trajectory.
pub fn pregeodesic_along(
    sys: &FramedSystem,
    ghat: &Metric,
    f: &FieldRef,
    s0: &State,
    t_end: f64,
    opts: &IntegrateOpts,
) -> Result<(f64, f64, Trajectory)> {
    let traj = integrate(&NonholonomicFlow::new(sys), s0, t_end, opts)?;
    let parts = traj
        .states
        .par_iter()
        .map(|s| pregeodesic_residual(sys, ghat, f, s).map(|(a, i)| (a.amax(), i.amax())))
        .collect::<Result<Vec<_>>>()?;
    let a = parts.iter().fold(0.0f64, |m, p| m.max(p.0));
    let i = parts.iter().fold(0.0f64, |m, p| m.max(p.1));
    Ok((a, i, traj))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub best: f64,
    pub min_residual: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Combined (A′)/(B′) residual of `ansatz(β)` over `points`.
pub fn combined_residual<A>(sys: &FramedSystem, ansatz: &A, beta: f64, points: &[Vec<f64>]) -> Result<f64>
where
    A: Fn(f64) -> Result<Candidate> + Sync,
{
    let cand = ansatz(beta)?;
    let vals = points
        .par_iter()
        .map(|q| {
            let pg = sys.geometry(q)?;
            let a = condition_a_at(&pg, &cand)?.max_abs();
            let b = condition_b_at(&pg, &cand)?.max_abs();
            Ok(a.max(b))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Grid search over `betas` followed by golden-section refinement around
/// the best grid value.
pub fn scan_preserving_extension<A>(sys: &FramedSystem, ansatz: A, betas: &[f64], points: &[Vec<f64>]) -> Result<ScanResult>
where
    A: Fn(f64) -> Result<Candidate> + Sync,
{
    if betas.is_empty() || points.is_empty() {
        return Err(Error::Invalid("empty scan grid".into()));
    }
    let curve: Vec<(f64, f64)> = betas
        .iter()
        .map(|b| Ok((*b, combined_residual(sys, &ansatz, *b, points)?)))
        .collect::<Result<_>>()?;
    let (ibest, _) = curve
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, (_, r))| if *r < acc.1 { (i, *r) } else { acc });
    let mut lo = curve[ibest.saturating_sub(1)].0;
    let mut hi = curve[(ibest + 1).min(curve.len() - 1)].0;
    let mut best = curve[ibest];
    if hi > lo {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |b: f64| combined_residual(sys, &ansatz, b, points);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        for _ in 0..80 {
            if (hi - lo) <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2)?;
            }
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f < best.1 {
                best = (x, f);
            }
        }
    }
    Ok(ScanResult {
        best: best.0,
        min_residual: best.1,
        curve,
    })
}

/// Carriage family: frame components `ḡ_{a,x} = β cos θ`,
/// `ḡ_{a,y} = β sin θ` and `ḡ_{a,θ} = −g(X_a, V_θ)`.
pub fn carriage_ansatz(sys: &FramedSystem, beta: f64) -> Result<Candidate> {
    let theta = sys
        .space
        .index("theta")
        .ok_or_else(|| Error::Invalid("system has no `theta` coordinate".into()))?;
    if sys.m() != 2 || sys.k() != 3 || sys.group.is_none() {
        return Err(Error::Invalid("carriage ansatz needs the carriage frame".into()));
    }
    let s2 = sys.clone();
    let n = sys.n();
    let gbar = FnField::new(n, 6, move |q| {
        let gg = vertical_coupling(&s2, q)?;
        let (c, s) = (q[theta].cos(), q[theta].sin());
        let mut out = vec![0.0; 6];
        for a in 0..2 {
            out[a * 3] = beta * c;
            out[a * 3 + 1] = beta * s;
            out[a * 3 + 2] = -gg[(a, 2)];
        }
        Ok(out)
    })
    .arc();
    Ok(Candidate::new(gbar, crate::field::constant(n, vec![0.0])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{builtin, Params};

    fn particle() -> FramedSystem {
        builtin("particle", &Params::new()).unwrap()
    }

    fn cand(sys: &FramedSystem, gxz: &str, f: &str) -> Candidate {
        Candidate::from_exprs(sys, &[(("x".into(), "z".into()), gxz.into())], f).unwrap()
    }

    #[test]
    fn tensor_argmax() {
        let mut t = Tensor::zeros(&[2, 3]);
        t.set(&[1, 2], -4.0);
        t.set(&[0, 1], 3.0);
        assert_eq!(t.argmax(), vec![1, 2]);
        assert_eq!(t.max_abs(), 4.0);
    }

    #[test]
    fn particle_solution_passes_a() {
        let s = particle();
        let c = cand(&s, "-y", "-0.5*ln(1+y^2)");
        let t = condition_a_residual(&s, &c, &[0.0, 1.0, 0.0]).unwrap();
        assert!(t.max_abs() < 1e-12, "{:?}", t);
    }

    #[test]
    fn constant_gbar_gives_unit_coefficient() {
        let s = particle();
        let c = cand(&s, "-1", "0");
        let t = condition_a_residual(&s, &c, &[0.0, 1.0, 0.0]).unwrap();
        // x,x,y entry: coefficient of ẋ² in the (A′) expression paired with y.
        assert!((t.get(&[0, 0, 1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_candidate_b_equals_multiplier() {
        let s = particle();
        let c = cand(&s, "0", "0");
        let q = [0.3, 0.8, -0.2];
        let b = condition_b_residual(&s, &c, &q).unwrap();
        let pg = s.geometry(&q).unwrap();
        let low = pg.lowered_d();
        for a in 0..2 {
            for bb in 0..2 {
                assert!((b.get(&[0, a, bb]) - low.get(2, a, bb)).abs() < 1e-12);
            }
        }
        assert!(b.max_abs() > 0.1);
    }

    #[test]
    fn completion_of_zero_candidate_is_block_diagonal() {
        let s = particle();
        let c = cand(&s, "0", "0");
        let pts = s.domain.with_points(3).grid();
        let cm = complete_metric(&s, &c, &pts).unwrap();
        assert_eq!(cm.scale, 1.0);
        assert_eq!(cm.reference, CompletionReference::MetricBlock);
        let q = [0.1, 0.4, 0.0];
        let g = cm.frame_components(&q).unwrap();
        let pg = s.geometry(&q).unwrap();
        assert!((g - &pg.metric.gf).amax() < 1e-14);
    }

    #[test]
    fn check_block_of_identity() {
        let b = check_block(&Mat::identity(3, 3));
        assert!(b.positive_definite);
        assert_eq!(b.eigenvalues, vec![1.0; 3]);
    }
}
