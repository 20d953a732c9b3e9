//! Sprays in quasi-velocities, explicit Runge-Kutta integrators and
//! trajectory utilities.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{contraction_at, lowered_christoffel, Frame, Metric, PointGeometry};
use crate::linalg::{self, Mat, Vector};
use crate::system::FramedSystem;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct State {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Self {
        State { q, v }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.q.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn unflatten(y: &[f64], nq: usize) -> Self {
        State {
            q: y[..nq].to_vec(),
            v: y[nq..].to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub energy: Vec<f64>,
    pub constraint_viol: Vec<f64>,
    pub coord_names: Vec<String>,
    pub vel_names: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn energy_drift(&self) -> f64 {
        match self.energy.first() {
            Some(e0) => self.energy.iter().fold(0.0f64, |m, e| m.max((e - e0).abs())),
            None => 0.0,
        }
    }

    pub fn max_constraint_violation(&self) -> f64 {
        linalg::inf_norm(&self.constraint_viol)
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.q.clone()).collect()
    }

    /// Time-rescaled copy `t -> a t`, with velocities divided by `a`.
    pub fn rescaled(&self, a: f64) -> Trajectory {
        let mut t = self.clone();
        for x in t.times.iter_mut() {
            *x *= a;
        }
        for s in t.states.iter_mut() {
            for v in s.v.iter_mut() {
                *v /= a;
            }
        }
        t
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.coord_names.iter().cloned());
        header.extend(self.vel_names.iter().map(|v| format!("v_{v}")));
        header.push("E".into());
        header.push("constraint_viol".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, s) in self.states.iter().enumerate() {
            let mut row = vec![fmt17(self.times[i])];
            row.extend(s.q.iter().map(|x| fmt17(*x)));
            row.extend(s.v.iter().map(|x| fmt17(*x)));
            row.push(fmt17(self.energy[i]));
            row.push(fmt17(self.constraint_viol[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// A second-order system in quasi-velocities.
pub trait Flow: Sync {
    fn nq(&self) -> usize;
    fn nv(&self) -> usize;
    /// Returns `(q̇, v̇)`.
    fn rhs(&self, q: &[f64], v: &[f64]) -> Result<(Vector, Vector)>;
    fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64>;
    fn constraint_violation(&self, _q: &[f64], _v: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    fn coord_names(&self) -> Vec<String>;
    fn vel_names(&self) -> Vec<String>;
}

fn frame_velocity(e: &Mat, cols: usize, v: &[f64]) -> Vector {
    let n = e.nrows();
    Vector::from_fn(n, |r, _| (0..cols).map(|c| e[(r, c)] * v[c]).sum())
}

/// The nonholonomic spray on the constraint distribution.
pub struct NonholonomicFlow<'a> {
    pub sys: &'a FramedSystem,
}

impl<'a> NonholonomicFlow<'a> {
    pub fn new(sys: &'a FramedSystem) -> Self {
        NonholonomicFlow { sys }
    }

    /// `λ_i = g_{ki} Γ^k_{ab} v^a v^b`.
    pub fn multipliers(&self, q: &[f64], v: &[f64]) -> Result<Vector> {
        let pg = self.sys.geometry(q)?;
        let (m, n) = (pg.m(), pg.n());
        let low = pg.lowered_d().contract(v);
        Ok(Vector::from_iterator(n - m, low.iter().skip(m).copied()))
    }
}

pub fn nonholonomic_field(sys: &FramedSystem, s: &State) -> Result<(Vector, Vector)> {
    NonholonomicFlow::new(sys).rhs(&s.q, &s.v)
}

pub fn lagrange_multipliers(sys: &FramedSystem, s: &State) -> Result<Vector> {
    NonholonomicFlow::new(sys).multipliers(&s.q, &s.v)
}

impl Flow for NonholonomicFlow<'_> {
    fn nq(&self) -> usize {
        self.sys.n()
    }
    fn nv(&self) -> usize {
        self.sys.m()
    }
    fn rhs(&self, q: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        let pg = self.sys.geometry(q)?;
        let qd = frame_velocity(&pg.frame.e, pg.m(), v);
        let c = contraction_at(&pg, v, false)?;
        Ok((qd, -c.d))
    }
    fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        let pg = self.sys.geometry(q)?;
        let vv = Vector::from_column_slice(v);
        Ok(0.5 * vv.dot(&(pg.g_ab() * &vv)))
    }
    fn constraint_violation(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        let pg = self.sys.geometry(q)?;
        let qd = frame_velocity(&pg.frame.e, pg.m(), v);
        let c = &pg.frame.e_inv * qd;
        Ok(c.iter().skip(pg.m()).fold(0.0f64, |a, x| a.max(x.abs())))
    }
    fn coord_names(&self) -> Vec<String> {
        self.sys.space.coord_names.clone()
    }
    fn vel_names(&self) -> Vec<String> {
        self.sys.frame.d_names.clone()
    }
}

/// Geodesic spray of a metric written in a frame with all `n`
/// quasi-velocities, optionally modified by a projective term `P(v) Δ`.
pub struct GeodesicFlow {
    pub metric: Metric,
    pub frame: Frame,
    pub coord_names: Vec<String>,
    /// Frame components `P_β`; `None` for the plain geodesic spray.
    pub projective: Option<crate::field::FieldRef>,
}

impl GeodesicFlow {
    pub fn new(metric: Metric, frame: Frame, coord_names: Vec<String>) -> Self {
        GeodesicFlow {
            metric,
            frame,
            coord_names,
            projective: None,
        }
    }

    pub fn with_projective(mut self, p: crate::field::FieldRef) -> Self {
        self.projective = Some(p);
        self
    }

    /// `Γ̂^α_{βγ} v^β v^γ` for all `n` frame components.
    pub fn contraction(&self, pg: &PointGeometry, v: &[f64]) -> Result<Vector> {
        let n = pg.n();
        let low = lowered_christoffel(&pg.frame, &pg.metric, n).contract(v);
        if !linalg::is_positive_definite(&pg.metric.gf) {
            return Err(Error::NotPositiveDefinite);
        }
        linalg::solve_metric(&pg.metric.gf, &low)
    }
}

pub fn geodesic_field(metric: &Metric, frame: &Frame, s: &State) -> Result<(Vector, Vector)> {
    GeodesicFlow::new(metric.clone(), frame.clone(), vec![]).rhs(&s.q, &s.v)
}

/// Geodesic spray plus `P_β v^β v^α` with frame coefficients `p`.
pub fn projective_field(metric: &Metric, frame: &Frame, p: &[f64], s: &State) -> Result<(Vector, Vector)> {
    let (qd, mut vd) = geodesic_field(metric, frame, s)?;
    let pv: f64 = p.iter().zip(&s.v).map(|(a, b)| a * b).sum();
    for (a, x) in vd.iter_mut().zip(&s.v) {
        *a += pv * x;
    }
    Ok((qd, vd))
}

impl Flow for GeodesicFlow {
    fn nq(&self) -> usize {
        self.frame.n()
    }
    fn nv(&self) -> usize {
        self.frame.n()
    }
    fn rhs(&self, q: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        let pg = PointGeometry::new(&self.frame, &self.metric, q)?;
        let qd = frame_velocity(&pg.frame.e, pg.n(), v);
        let mut vd = -self.contraction(&pg, v)?;
        if let Some(p) = &self.projective {
            let pc = p.eval(q)?;
            let pv: f64 = pc.iter().zip(v).map(|(a, b)| a * b).sum();
            for (a, x) in vd.iter_mut().zip(v) {
                *a += pv * x;
            }
        }
        Ok((qd, vd))
    }
    fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        let pg = PointGeometry::new(&self.frame, &self.metric, q)?;
        let vv = Vector::from_column_slice(v);
        Ok(0.5 * vv.dot(&(&pg.metric.gf * &vv)))
    }
    fn constraint_violation(&self, _q: &[f64], v: &[f64]) -> Result<f64> {
        Ok(v.iter().skip(self.frame.m()).fold(0.0f64, |a, x| a.max(x.abs())))
    }
    fn coord_names(&self) -> Vec<String> {
        self.coord_names.clone()
    }
    fn vel_names(&self) -> Vec<String> {
        self.frame.names()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOpts {
    pub method: Method,
    /// Keep every `stride`-th accepted step (the final state is always kept).
    pub stride: usize,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            method: Method::Rk4 { dt: 1e-3 },
            stride: 1,
        }
    }
}

impl IntegrateOpts {
    pub fn rk4(dt: f64) -> Self {
        IntegrateOpts {
            method: Method::Rk4 { dt },
            stride: 1,
        }
    }
    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegrateOpts {
            method: Method::Rk45 { rtol, atol },
            stride: 1,
        }
    }
}

fn deriv<F: Flow + ?Sized>(f: &F, y: &[f64]) -> Result<Vec<f64>> {
    let nq = f.nq();
    let (qd, vd) = f.rhs(&y[..nq], &y[nq..])?;
    let out: Vec<f64> = qd.iter().chain(vd.iter()).copied().collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericDomain("non-finite derivative".into()));
    }
    Ok(out)
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step<F: Flow + ?Sized>(f: &F, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = deriv(f, y)?;
    let k2 = deriv(f, &axpy(y, 0.5 * h, &k1))?;
    let k3 = deriv(f, &axpy(y, 0.5 * h, &k2))?;
    let k4 = deriv(f, &axpy(y, h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step; returns the fifth-order solution and the
/// scaled error norm.
fn dp_step<F: Flow + ?Sized>(f: &F, y: &[f64], h: f64, rtol: f64, atol: f64) -> Result<(Vec<f64>, f64)> {
    let _ = DP_C;
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = DP_A[s][j];
            if a != 0.0 {
                for i in 0..y.len() {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k.push(deriv(f, &ys)?);
    }
    let mut y5 = y.to_vec();
    let mut err = 0.0f64;
    for i in 0..y.len() {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for s in 0..7 {
            d5 += DP_B5[s] * k[s][i];
            d4 += DP_B4[s] * k[s][i];
        }
        y5[i] += h * d5;
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        err = err.max((h * (d5 - d4)).abs() / sc);
    }
    Ok((y5, err))
}

pub fn integrate<F: Flow + ?Sized>(f: &F, s0: &State, t_end: f64, opts: &IntegrateOpts) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(Error::Invalid("t_end must be positive".into()));
    }
    if s0.q.len() != f.nq() || s0.v.len() != f.nv() {
        return Err(Error::Invalid(format!(
            "initial state has shape ({}, {}), flow expects ({}, {})",
            s0.q.len(),
            s0.v.len(),
            f.nq(),
            f.nv()
        )));
    }
    let nq = f.nq();
    let mut traj = Trajectory {
        coord_names: f.coord_names(),
        vel_names: f.vel_names(),
        ..Default::default()
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[f64]| -> Result<()> {
        let s = State::unflatten(y, nq);
        traj.energy.push(f.energy(&s.q, &s.v)?);
        traj.constraint_viol.push(f.constraint_violation(&s.q, &s.v)?);
        traj.times.push(t);
        traj.states.push(s);
        Ok(())
    };
    let fail = |traj: Trajectory, t: f64, e: Error| Error::Integration {
        t,
        reason: e.to_string(),
        partial: Box::new(traj),
    };
    let mut y = s0.flatten();
    if let Err(e) = record(&mut traj, 0.0, &y) {
        return Err(fail(traj, 0.0, e));
    }
    let stride = opts.stride.max(1);
    match opts.method {
        Method::Rk4 { dt } => {
            if !(dt > 0.0) {
                return Err(Error::Invalid("dt must be positive".into()));
            }
            let steps = (t_end / dt).ceil() as usize;
            let h = t_end / steps as f64;
            for i in 1..=steps {
                let t = i as f64 * h;
                y = match rk4_step(f, &y, h) {
                    Ok(y) => y,
                    Err(e) => return Err(fail(traj, t - h, e)),
                };
                if i % stride == 0 || i == steps {
                    if let Err(e) = record(&mut traj, t, &y) {
                        return Err(fail(traj, t, e));
                    }
                }
            }
        }
        Method::Rk45 { rtol, atol } => {
            let mut t = 0.0;
            let mut h = (t_end * 1e-3).min(1e-2);
            let mut accepted = 0usize;
            while t < t_end {
                if t + h > t_end {
                    h = t_end - t;
                }
                let (yn, err) = match dp_step(f, &y, h, rtol, atol) {
                    Ok(r) => r,
                    Err(e) => return Err(fail(traj, t, e)),
                };
                if err <= 1.0 {
                    t = if t_end - (t + h) < 1e-14 * t_end { t_end } else { t + h };
                    y = yn;
                    accepted += 1;
                    if accepted % stride == 0 || t >= t_end {
                        if let Err(e) = record(&mut traj, t, &y) {
                            return Err(fail(traj, t, e));
                        }
                    }
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if h < 1e-14 * t_end.max(1.0) {
                    return Err(fail(traj, t, Error::NumericDomain("step size underflow".into())));
                }
            }
        }
    }
    Ok(traj)
}

/// Cumulative arclength of a polyline under `metric`, evaluated at chord
/// midpoints.
pub fn arclength(points: &[Vec<f64>], metric: &Metric) -> Result<Vec<f64>> {
    let mut s = vec![0.0; points.len()];
    for i in 1..points.len() {
        let (a, b) = (&points[i - 1], &points[i]);
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let d = Vector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| y - x));
        let g = metric.at(&mid)?;
        s[i] = s[i - 1] + d.dot(&(&g * &d)).max(0.0).sqrt();
    }
    Ok(s)
}

fn sample_at(points: &[Vec<f64>], s: &[f64], target: f64) -> Vec<f64> {
    let j = s.partition_point(|x| *x < target).clamp(1, s.len() - 1);
    let (s0, s1) = (s[j - 1], s[j]);
    let w = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
    points[j - 1]
        .iter()
        .zip(&points[j])
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

pub const RESAMPLE_POINTS: usize = 512;

/// Largest coordinate distance between two curves after both are
/// parametrized by arclength and resampled over their common length.
pub fn compare_as_point_sets(t1: &Trajectory, t2: &Trajectory, metric: &Metric) -> Result<f64> {
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    let p1 = t1.points();
    let p2 = t2.points();
    let s1 = arclength(&p1, metric)?;
    let s2 = arclength(&p2, metric)?;
    let len = s1[s1.len() - 1].min(s2[s2.len() - 1]);
    if !(len > 0.0) || p1.len() < 2 || p2.len() < 2 {
        return Err(Error::ZeroLength);
    }
    let mut worst = 0.0f64;
    for i in 0..RESAMPLE_POINTS {
        let target = len * i as f64 / (RESAMPLE_POINTS - 1) as f64;
        let a = sample_at(&p1, &s1, target);
        let b = sample_at(&p2, &s2, target);
        let d = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst = worst.max(d);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic oscillator written as a flow, for integrator order checks.
    struct Osc;
    impl Flow for Osc {
        fn nq(&self) -> usize {
            1
        }
        fn nv(&self) -> usize {
            1
        }
        fn rhs(&self, q: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
            Ok((Vector::from_vec(vec![v[0]]), Vector::from_vec(vec![-q[0]])))
        }
        fn energy(&self, q: &[f64], v: &[f64]) -> Result<f64> {
            Ok(0.5 * (q[0] * q[0] + v[0] * v[0]))
        }
        fn coord_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn vel_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let s0 = State::new(vec![1.0], vec![0.0]);
        let err = |dt: f64| {
            let t = integrate(&Osc, &s0, 1.0, &IntegrateOpts::rk4(dt)).unwrap();
            (t.last().unwrap().q[0] - 1.0f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn rk45_meets_tolerance() {
        let s0 = State::new(vec![1.0], vec![0.0]);
        let t = integrate(&Osc, &s0, 5.0, &IntegrateOpts::rk45(1e-10, 1e-12)).unwrap();
        assert_eq!(*t.times.last().unwrap(), 5.0);
        assert!((t.last().unwrap().q[0] - 5.0f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let s0 = State::new(vec![1.0], vec![0.0]);
        assert!(integrate(&Osc, &s0, 0.0, &IntegrateOpts::default()).is_err());
    }

    #[test]
    fn csv_header() {
        let s0 = State::new(vec![1.0], vec![0.0]);
        let t = integrate(&Osc, &s0, 0.01, &IntegrateOpts::rk4(0.005)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,v_x,E,constraint_viol\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
