//! Vector fields, anholonomic frames, bracket coefficients and the Koszul
//! contraction of the Levi-Civita connection in a frame.
//!
//! Index layout: the frame is `{X_a} ∪ {X_i}` with the `m` constraint
//! fields first, so frame index `α < m` is a D-direction and `α >= m` is a
//! complement direction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Field, FieldRef};
use crate::linalg::{self, Mat, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSpace {
    pub dim: usize,
    pub coord_names: Vec<String>,
}

impl ConfigSpace {
    pub fn new(names: &[&str]) -> Result<Self> {
        Self::from_strings(names.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_strings(coord_names: Vec<String>) -> Result<Self> {
        if coord_names.len() < 2 {
            return Err(Error::Invalid("configuration space needs dim >= 2".into()));
        }
        for (i, a) in coord_names.iter().enumerate() {
            if coord_names[..i].contains(a) {
                return Err(Error::Invalid(format!("duplicate coordinate `{a}`")));
            }
        }
        Ok(ConfigSpace {
            dim: coord_names.len(),
            coord_names,
        })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.coord_names.iter().position(|c| c == name)
    }
}

#[derive(Clone)]
pub struct VectorField(pub FieldRef);

impl VectorField {
    pub fn new(f: FieldRef) -> Self {
        VectorField(f)
    }

    pub fn components(&self, q: &[f64]) -> Result<Vector> {
        Ok(Vector::from_vec(self.0.eval(q)?))
    }

    pub fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        self.0.jacobian(q)
    }
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField(len={})", self.0.len())
    }
}

/// Coordinate-basis metric `g_{αβ}(q)` stored row-major.
#[derive(Clone)]
pub struct Metric {
    pub field: FieldRef,
    pub possibly_degenerate: bool,
}

impl Metric {
    pub fn new(field: FieldRef) -> Self {
        Metric {
            field,
            possibly_degenerate: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.field.dim_in()
    }

    pub fn at(&self, q: &[f64]) -> Result<Mat> {
        let n = self.dim();
        let v = self.field.eval(q)?;
        let g = Mat::from_row_slice(n, n, &v);
        Ok((&g + g.transpose()) * 0.5)
    }

    /// `∂_μ g` for each coordinate μ.
    pub fn derivs(&self, q: &[f64]) -> Result<Vec<Mat>> {
        let n = self.dim();
        let j = self.field.jacobian(q)?;
        Ok((0..n)
            .map(|mu| {
                let d = Mat::from_fn(n, n, |r, c| j[(r * n + c, mu)]);
                (&d + d.transpose()) * 0.5
            })
            .collect())
    }
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Metric(n={}, degenerate_ok={})", self.dim(), self.possibly_degenerate)
    }
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub d: Vec<VectorField>,
    pub perp: Vec<VectorField>,
    pub d_names: Vec<String>,
    pub perp_names: Vec<String>,
}

impl Frame {
    pub fn m(&self) -> usize {
        self.d.len()
    }
    pub fn k(&self) -> usize {
        self.perp.len()
    }
    pub fn n(&self) -> usize {
        self.d.len() + self.perp.len()
    }
    pub fn field(&self, alpha: usize) -> &VectorField {
        if alpha < self.m() {
            &self.d[alpha]
        } else {
            &self.perp[alpha - self.m()]
        }
    }
    pub fn names(&self) -> Vec<String> {
        self.d_names.iter().chain(self.perp_names.iter()).cloned().collect()
    }
}

pub fn lie_bracket(x: &VectorField, y: &VectorField, q: &[f64]) -> Result<Vector> {
    let xv = x.components(q)?;
    let yv = y.components(q)?;
    let jx = x.jacobian(q)?;
    let jy = y.jacobian(q)?;
    let out = &jy * &xv - &jx * &yv;
    if out.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericDomain("non-finite bracket".into()));
    }
    Ok(out)
}

/// Bracket coefficients `R^γ_{αβ}`, with `[X_α, X_β] = R^γ_{αβ} X_γ`.
#[derive(Clone, Debug)]
pub struct BracketTable {
    pub n: usize,
    pub r: Vec<f64>,
}

impl BracketTable {
    #[inline]
    pub fn get(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.r[(gamma * self.n + alpha) * self.n + beta]
    }
}

/// Frame data at one point: frame matrix, its coordinate derivatives,
/// inverse and bracket table.
#[derive(Clone, Debug)]
pub struct FramePoint {
    pub q: Vec<f64>,
    pub m: usize,
    pub e: Mat,
    /// `de[μ][(ν, α)] = ∂_μ X_α^ν`.
    pub de: Vec<Mat>,
    pub e_inv: Mat,
    pub brackets: BracketTable,
}

impl FramePoint {
    pub fn new(frame: &Frame, q: &[f64]) -> Result<Self> {
        let n = frame.n();
        if q.len() != n {
            return Err(Error::Invalid(format!("point has {} coordinates, frame needs {n}", q.len())));
        }
        let mut e = Mat::zeros(n, n);
        let mut de = vec![Mat::zeros(n, n); n];
        for alpha in 0..n {
            let f = frame.field(alpha);
            let c = f.components(q)?;
            let j = f.jacobian(q)?;
            for nu in 0..n {
                e[(nu, alpha)] = c[nu];
                for (mu, d) in de.iter_mut().enumerate() {
                    d[(nu, alpha)] = j[(nu, mu)];
                }
            }
        }
        let e_inv = linalg::inverse(&e).ok_or(Error::DegenerateFrame)?;
        let mut r = vec![0.0; n * n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                // [X_a, X_b]^ν = ∂_μ X_b^ν X_a^μ − ∂_μ X_a^ν X_b^μ
                let mut br = Vector::zeros(n);
                for mu in 0..n {
                    let xa = e[(mu, a)];
                    let xb = e[(mu, b)];
                    for nu in 0..n {
                        br[nu] += de[mu][(nu, b)] * xa - de[mu][(nu, a)] * xb;
                    }
                }
                let coeff = &e_inv * br;
                for g in 0..n {
                    r[(g * n + a) * n + b] = coeff[g];
                    r[(g * n + b) * n + a] = -coeff[g];
                }
            }
        }
        Ok(FramePoint {
            q: q.to_vec(),
            m: frame.m(),
            e,
            de,
            e_inv,
            brackets: BracketTable { n, r },
        })
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    /// Directional derivative `X_α(φ)` from a coordinate gradient.
    pub fn along(&self, alpha: usize, grad: &[f64]) -> f64 {
        (0..self.n()).map(|mu| self.e[(mu, alpha)] * grad[mu]).sum()
    }

    /// Frame derivatives of a scalar: `[X_0(φ), …, X_{n-1}(φ)]`.
    pub fn frame_gradient(&self, grad: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|a| self.along(a, grad)).collect()
    }
}

/// Metric data relative to a frame at one point.
#[derive(Clone, Debug)]
pub struct MetricPoint {
    pub g: Mat,
    /// Frame components `g(X_α, X_β)`.
    pub gf: Mat,
    /// `xg[α][(β, γ)] = X_α(g(X_β, X_γ))`.
    pub xg: Vec<Mat>,
}

impl MetricPoint {
    pub fn new(fp: &FramePoint, metric: &Metric) -> Result<Self> {
        let q = &fp.q;
        let g = metric.at(q)?;
        let dg = metric.derivs(q)?;
        let n = fp.n();
        let ge = &g * &fp.e;
        let gf = fp.e.transpose() * &ge;
        let dgf: Vec<Mat> = (0..n)
            .map(|mu| {
                let t = fp.de[mu].transpose() * &ge;
                &t + t.transpose() + fp.e.transpose() * &dg[mu] * &fp.e
            })
            .collect();
        let xg = (0..n)
            .map(|alpha| {
                let mut acc = Mat::zeros(n, n);
                for (mu, d) in dgf.iter().enumerate() {
                    let w = fp.e[(mu, alpha)];
                    if w != 0.0 {
                        acc += d * w;
                    }
                }
                acc
            })
            .collect();
        Ok(MetricPoint { g, gf, xg })
    }
}

/// Symmetric lowered connection coefficients in the frame:
/// `L[γ][α][β] = g(∇_{X_α} X_β, X_γ)` symmetrized in `(α, β)`, so that
/// `L_γ(v) = g_{γδ} Γ^δ_{αβ} v^α v^β`.
#[derive(Clone, Debug)]
pub struct Lowered {
    pub n: usize,
    pub l: Vec<f64>,
}

impl Lowered {
    #[inline]
    pub fn get(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.l[(gamma * self.n + alpha) * self.n + beta]
    }

    pub fn contract(&self, v: &[f64]) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |gamma, _| {
            let mut s = 0.0;
            for (a, va) in v.iter().enumerate() {
                if *va == 0.0 {
                    continue;
                }
                for (b, vb) in v.iter().enumerate() {
                    s += self.get(gamma, a, b) * va * vb;
                }
            }
            s
        })
    }
}

/// Koszul formula in an anholonomic frame, restricted to `α, β < upto`.
pub fn lowered_christoffel(fp: &FramePoint, mp: &MetricPoint, upto: usize) -> Lowered {
    let n = fp.n();
    let r = &fp.brackets;
    let gf = &mp.gf;
    // gr[β][α][γ] = g_{δβ} R^δ_{αγ}
    let mut gr = vec![0.0; n * n * n];
    for b in 0..n {
        for a in 0..upto.max(n) {
            for c in 0..n {
                let mut s = 0.0;
                for d in 0..n {
                    s += gf[(d, b)] * r.get(d, a, c);
                }
                gr[(b * n + a) * n + c] = s;
            }
        }
    }
    let mut l = vec![0.0; n * n * n];
    for c in 0..n {
        for a in 0..upto {
            for b in a..upto {
                let v = 0.5
                    * (mp.xg[a][(b, c)] + mp.xg[b][(a, c)]
                        - mp.xg[c][(a, b)]
                        - gr[(b * n + a) * n + c]
                        - gr[(a * n + b) * n + c]);
                l[(c * n + a) * n + b] = v;
                l[(c * n + b) * n + a] = v;
            }
        }
    }
    Lowered { n, l }
}

/// Bundled per-point data for a system's own metric.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub frame: FramePoint,
    pub metric: MetricPoint,
}

impl PointGeometry {
    pub fn new(frame: &Frame, metric: &Metric, q: &[f64]) -> Result<Self> {
        let fp = FramePoint::new(frame, q)?;
        let mp = MetricPoint::new(&fp, metric)?;
        Ok(PointGeometry { frame: fp, metric: mp })
    }

    pub fn m(&self) -> usize {
        self.frame.m
    }
    pub fn n(&self) -> usize {
        self.frame.n()
    }
    pub fn g_ab(&self) -> Mat {
        let m = self.m();
        linalg::sub_block(&self.metric.gf, 0..m, 0..m)
    }
    pub fn g_ij(&self) -> Mat {
        let (m, n) = (self.m(), self.n());
        linalg::sub_block(&self.metric.gf, m..n, m..n)
    }
    pub fn r(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.frame.brackets.get(gamma, alpha, beta)
    }
    pub fn lowered_d(&self) -> Lowered {
        lowered_christoffel(&self.frame, &self.metric, self.m())
    }
}

pub fn frame_decompose(frame: &Frame, v: &[f64], q: &[f64]) -> Result<Vector> {
    let fp = FramePoint::new(frame, q)?;
    let vv = Vector::from_column_slice(v);
    let c = &fp.e_inv * &vv;
    let resid = (&fp.e * &c - &vv).norm();
    if resid > 1e-10 * vv.norm().max(f64::MIN_POSITIVE) && resid > 1e-14 {
        return Err(Error::DegenerateFrame);
    }
    Ok(c)
}

pub fn bracket_coefficients(frame: &Frame, q: &[f64]) -> Result<BracketTable> {
    Ok(FramePoint::new(frame, q)?.brackets)
}

#[derive(Clone, Debug)]
pub struct FramedMetric {
    pub g_ab: Mat,
    pub g_ij: Mat,
    /// Mixed block, kept for diagnostics; zero for orthogonal frames.
    pub g_ai: Mat,
}

/// Columns are the frame fields at `q`.
pub fn frame_matrix(frame: &Frame, q: &[f64]) -> Result<Mat> {
    let n = frame.n();
    let mut e = Mat::zeros(n, n);
    for alpha in 0..n {
        let c = frame.field(alpha).components(q)?;
        e.set_column(alpha, &c);
    }
    Ok(e)
}

pub fn metric_in_frame(g: &Metric, frame: &Frame, q: &[f64]) -> Result<FramedMetric> {
    let n = frame.n();
    let m = frame.m();
    let e = frame_matrix(frame, q)?;
    let gf = e.transpose() * g.at(q)? * &e;
    Ok(FramedMetric {
        g_ab: linalg::sub_block(&gf, 0..m, 0..m),
        g_ij: linalg::sub_block(&gf, m..n, m..n),
        g_ai: linalg::sub_block(&gf, 0..m, m..n),
    })
}

/// `Γ^α_{bc} v^b v^c` for a constrained velocity `v` (m components).
#[derive(Clone, Debug)]
pub struct ChristoffelContraction {
    pub d: Vector,
    pub perp: Vector,
}

pub fn christoffel_contraction(
    g: &Metric,
    frame: &Frame,
    q: &[f64],
    v: &[f64],
) -> Result<ChristoffelContraction> {
    let pg = PointGeometry::new(frame, g, q)?;
    contraction_at(&pg, v, true)
}

pub fn contraction_at(pg: &PointGeometry, v: &[f64], with_perp: bool) -> Result<ChristoffelContraction> {
    let (m, n) = (pg.m(), pg.n());
    let low = pg.lowered_d().contract(v);
    let ld = Vector::from_iterator(m, low.iter().take(m).copied());
    let d = linalg::solve_metric(&pg.g_ab(), &ld)?;
    let perp = if with_perp && n > m {
        let lp = Vector::from_iterator(n - m, low.iter().skip(m).copied());
        linalg::solve_metric(&pg.g_ij(), &lp)?
    } else {
        Vector::zeros(n - m)
    };
    Ok(ChristoffelContraction { d, perp })
}

/// Largest `|g(X_a, X_i)|` at `q`.
pub fn orthogonality_defect(g: &Metric, frame: &Frame, q: &[f64]) -> Result<f64> {
    Ok(metric_in_frame(g, frame, q)?.g_ai.amax())
}

/// Jacobi residual `max |Σ_cyc X_α(R^ε_{βγ}) + R^δ_{βγ} R^ε_{αδ}|`,
/// with the derivatives of `R` by central differences.
pub fn jacobi_residual(frame: &Frame, q: &[f64]) -> Result<f64> {
    let n = frame.n();
    let fp = FramePoint::new(frame, q)?;
    let h = crate::field::fd_step(q);
    let mut dr = Vec::with_capacity(n);
    let mut p = q.to_vec();
    for mu in 0..n {
        p[mu] = q[mu] + h;
        let hi = bracket_coefficients(frame, &p)?;
        p[mu] = q[mu] - h;
        let lo = bracket_coefficients(frame, &p)?;
        p[mu] = q[mu];
        dr.push(
            hi.r.iter()
                .zip(lo.r.iter())
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let r = &fp.brackets;
    let xr = |alpha: usize, eps: usize, b: usize, c: usize| -> f64 {
        let idx = (eps * n + b) * n + c;
        (0..n).map(|mu| fp.e[(mu, alpha)] * dr[mu][idx]).sum()
    };
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for eps in 0..n {
                    let mut s = 0.0;
                    for (x, y, z) in [(a, b, c), (b, c, a), (c, a, b)] {
                        s += xr(x, eps, y, z);
                        for d in 0..n {
                            s += r.get(d, y, z) * r.get(eps, x, d);
                        }
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Complement field `W + K^b X_b` with `K = −G^{-1} g(X_·, W)`, i.e. the
/// g-orthogonal projection of `W` off the span of the `X_b`. The Jacobian is
/// assembled from the product rule.
pub struct ProjectedField {
    d: Vec<FieldRef>,
    w: FieldRef,
    metric: FieldRef,
}

impl ProjectedField {
    pub fn new(d: Vec<FieldRef>, w: FieldRef, metric: FieldRef) -> Self {
        ProjectedField { d, w, metric }
    }

    pub fn arc(self) -> FieldRef {
        Arc::new(self)
    }

    #[allow(clippy::type_complexity)]
    fn parts(&self, q: &[f64]) -> Result<(Mat, Vector, Mat, Vector, Mat)> {
        let n = self.w.dim_in();
        let m = self.d.len();
        let mut x = Mat::zeros(n, m);
        for (b, f) in self.d.iter().enumerate() {
            x.set_column(b, &Vector::from_vec(f.eval(q)?));
        }
        let w = Vector::from_vec(self.w.eval(q)?);
        let gv = self.metric.eval(q)?;
        let g = Mat::from_row_slice(n, n, &gv);
        let gx = &g * &x;
        let gmat = x.transpose() * &gx;
        let gw = x.transpose() * (&g * &w);
        Ok((x, w, g, gw, gmat))
    }
}

impl Field for ProjectedField {
    fn dim_in(&self) -> usize {
        self.w.dim_in()
    }
    fn len(&self) -> usize {
        self.w.dim_in()
    }
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let (x, w, _, gw, gmat) = self.parts(q)?;
        let k = -linalg::solve_metric(&gmat, &gw)?;
        Ok((w + &x * k).iter().copied().collect())
    }
    fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        let n = self.w.dim_in();
        let m = self.d.len();
        let (x, w, g, gw, gmat) = self.parts(q)?;
        let ginv = linalg::inverse(&gmat).ok_or(Error::DegenerateMetric)?;
        let k = -(&ginv * &gw);
        let jx: Vec<Mat> = self.d.iter().map(|f| f.jacobian(q)).collect::<Result<_>>()?;
        let jw = self.w.jacobian(q)?;
        let jg = self.metric.jacobian(q)?;
        let mut out = jw.clone();
        for (b, j) in jx.iter().enumerate() {
            out += j * k[b];
        }
        for mu in 0..n {
            let dg = Mat::from_fn(n, n, |r, c| jg[(r * n + c, mu)]);
            let mut dx = Mat::zeros(n, m);
            for (b, j) in jx.iter().enumerate() {
                dx.set_column(b, &j.column(mu));
            }
            let dw = jw.column(mu).into_owned();
            let d_gmat = {
                let t = dx.transpose() * &g * &x;
                &t + t.transpose() + x.transpose() * &dg * &x
            };
            let d_gw = dx.transpose() * &g * &w + x.transpose() * &dg * &w + x.transpose() * &g * &dw;
            let dk = -(&ginv * (d_gw + d_gmat * &k));
            let col = &x * dk;
            for r in 0..n {
                out[(r, mu)] += col[r];
            }
        }
        let _ = w;
        Ok(out)
    }
}
