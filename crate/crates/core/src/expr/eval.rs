use std::collections::BTreeMap;

use super::{BinOp, Expr, Func};
use crate::error::{Error, Result};

/// An expression with variables resolved to slot indices and parameters
/// folded to constants.
#[derive(Clone, Debug)]
pub enum Compiled {
    Num(f64),
    Slot(usize),
    Neg(Box<Compiled>),
    Bin(BinOp, Box<Compiled>, Box<Compiled>),
    Call(Func, Box<Compiled>),
}

fn domain(msg: String) -> Error {
    Error::NumericDomain(msg)
}

impl Compiled {
    /// Resolves names against `slots` first, then `consts`; `pi` is
    /// predefined unless shadowed.
    pub fn new(e: &Expr, slots: &[String], consts: &BTreeMap<String, f64>) -> Result<Compiled> {
        Ok(match e {
            Expr::Num(x) => Compiled::Num(*x),
            Expr::Var(v) => {
                if let Some(i) = slots.iter().position(|s| s == v) {
                    Compiled::Slot(i)
                } else if let Some(c) = consts.get(v) {
                    Compiled::Num(*c)
                } else if v == "pi" {
                    Compiled::Num(std::f64::consts::PI)
                } else {
                    return Err(Error::UnknownVariable(v.clone()));
                }
            }
            Expr::Neg(a) => Compiled::Neg(Box::new(Compiled::new(a, slots, consts)?)),
            Expr::Call(f, a) => Compiled::Call(*f, Box::new(Compiled::new(a, slots, consts)?)),
            Expr::Bin(op, a, b) => Compiled::Bin(
                *op,
                Box::new(Compiled::new(a, slots, consts)?),
                Box::new(Compiled::new(b, slots, consts)?),
            ),
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Compiled::Num(x) if *x == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = match self {
            Compiled::Num(c) => return Ok(*c),
            Compiled::Slot(i) => return Ok(x[*i]),
            Compiled::Neg(a) => -a.eval(x)?,
            Compiled::Bin(op, a, b) => {
                let l = a.eval(x)?;
                let r = b.eval(x)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(domain("division by zero".into()));
                        }
                        l / r
                    }
                    BinOp::Pow => {
                        if r.fract() == 0.0 && r.abs() < 2147483647.0 {
                            if l == 0.0 && r < 0.0 {
                                return Err(domain("zero raised to a negative power".into()));
                            }
                            l.powi(r as i32)
                        } else {
                            if l <= 0.0 {
                                return Err(domain(format!(
                                    "non-integer power of non-positive base {l}"
                                )));
                            }
                            l.powf(r)
                        }
                    }
                }
            }
            Compiled::Call(f, a) => {
                let u = a.eval(x)?;
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Tan => u.tan(),
                    Func::Exp => u.exp(),
                    Func::Ln => {
                        if u <= 0.0 {
                            return Err(domain(format!("ln of non-positive value {u}")));
                        }
                        u.ln()
                    }
                    Func::Sqrt => {
                        if u < 0.0 {
                            return Err(domain(format!("sqrt of negative value {u}")));
                        }
                        u.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain("non-finite intermediate value".into()))
        }
    }
}
