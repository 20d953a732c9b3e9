//! Smooth maps `R^n -> R^len` with value and Jacobian.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::expr::{Compiled, Expr};
use crate::linalg::Mat;

/// Central-difference step for a point `q`.
pub fn fd_step(q: &[f64]) -> f64 {
    1e-6 * q.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

pub trait Field: Send + Sync {
    fn dim_in(&self) -> usize;
    fn len(&self) -> usize;
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>>;

    /// `len x dim_in` matrix of partial derivatives.
    fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        fd_jacobian(self, q)
    }
}

pub type FieldRef = Arc<dyn Field>;

pub fn fd_jacobian<F: Field + ?Sized>(f: &F, q: &[f64]) -> Result<Mat> {
    let n = f.dim_in();
    let h = fd_step(q);
    let mut jac = Mat::zeros(f.len(), n);
    let mut p = q.to_vec();
    for mu in 0..n {
        p[mu] = q[mu] + h;
        let hi = f.eval(&p)?;
        p[mu] = q[mu] - h;
        let lo = f.eval(&p)?;
        p[mu] = q[mu];
        for r in 0..f.len() {
            jac[(r, mu)] = (hi[r] - lo[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Components given as expressions; the Jacobian is the exact symbolic one.
pub struct ExprField {
    n: usize,
    exprs: Vec<Expr>,
    comps: Vec<Compiled>,
    jac: Vec<Vec<Compiled>>,
}

impl ExprField {
    pub fn new(exprs: &[Expr], vars: &[String], consts: &BTreeMap<String, f64>) -> Result<Self> {
        let comps = exprs
            .iter()
            .map(|e| Compiled::new(e, vars, consts))
            .collect::<Result<Vec<_>>>()?;
        let jac = exprs
            .iter()
            .map(|e| {
                vars.iter()
                    .map(|v| Compiled::new(&e.differentiate(v), vars, consts))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExprField {
            n: vars.len(),
            exprs: exprs.to_vec(),
            comps,
            jac,
        })
    }

    pub fn parse(srcs: &[&str], vars: &[String], consts: &BTreeMap<String, f64>) -> Result<Self> {
        let exprs = srcs
            .iter()
            .map(|s| crate::expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&exprs, vars, consts)
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn arc(self) -> FieldRef {
        Arc::new(self)
    }
}

impl fmt::Debug for ExprField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.exprs.iter().map(|e| e.to_string()).collect();
        write!(f, "ExprField({})", s.join(", "))
    }
}

impl Field for ExprField {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn len(&self) -> usize {
        self.comps.len()
    }
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|c| c.eval(q)).collect()
    }
    fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        let mut m = Mat::zeros(self.comps.len(), self.n);
        for (r, row) in self.jac.iter().enumerate() {
            for (c, d) in row.iter().enumerate() {
                if !d.is_zero() {
                    m[(r, c)] = d.eval(q)?;
                }
            }
        }
        Ok(m)
    }
}

type ValueFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> Result<Mat> + Send + Sync;

/// Closure-backed field; Jacobian by central differences unless supplied.
pub struct FnField {
    n: usize,
    len: usize,
    f: Box<ValueFn>,
    jac: Option<Box<JacFn>>,
}

impl FnField {
    pub fn new(
        n: usize,
        len: usize,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        FnField {
            n,
            len,
            f: Box::new(f),
            jac: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> Result<Mat> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    pub fn arc(self) -> FieldRef {
        Arc::new(self)
    }
}

impl Field for FnField {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn len(&self) -> usize {
        self.len
    }
    fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        (self.f)(q)
    }
    fn jacobian(&self, q: &[f64]) -> Result<Mat> {
        match &self.jac {
            Some(j) => j(q),
            None => fd_jacobian(self, q),
        }
    }
}

pub fn constant(n: usize, values: Vec<f64>) -> FieldRef {
    let len = values.len();
    FnField::new(n, len, move |_| Ok(values.clone()))
        .with_jacobian(move |_| Ok(Mat::zeros(len, n)))
        .arc()
}

/// Evaluates a scalar field.
pub fn scalar(f: &dyn Field, q: &[f64]) -> Result<f64> {
    Ok(f.eval(q)?[0])
}

/// Gradient of a scalar field.
pub fn gradient(f: &dyn Field, q: &[f64]) -> Result<Vec<f64>> {
    let j = f.jacobian(q)?;
    Ok(j.row(0).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn analytic_and_fd_jacobians_agree() {
        let f = ExprField::parse(&["x*sin(y)", "exp(x*y) + y^3"], &vars(&["x", "y"]), &BTreeMap::new())
            .unwrap();
        let q = [0.4, -1.3];
        let a = f.jacobian(&q).unwrap();
        let n = fd_jacobian(&f, &q).unwrap();
        assert!((a - n).amax() < 1e-8);
    }

    #[test]
    fn fd_error_shrinks_quadratically() {
        // Error of a central difference with step h, measured directly.
        let g = |x: f64| (2.0 * x).sin();
        let exact = 2.0 * (2.0f64 * 0.7).cos();
        let err = |h: f64| ((g(0.7 + h) - g(0.7 - h)) / (2.0 * h) - exact).abs();
        let ratio = err(1e-2) / err(5e-3);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }
}
