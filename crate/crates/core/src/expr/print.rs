use std::fmt;

use super::{BinOp, Expr};

const P_ADD: u8 = 1;
const P_MUL: u8 = 2;
const P_NEG: u8 = 3;
const P_POW: u8 = 4;
const P_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Num(x) if *x < 0.0 => P_NEG,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => P_ATOM,
        Expr::Neg(_) => P_NEG,
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => P_ADD,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => P_MUL,
        Expr::Bin(BinOp::Pow, ..) => P_POW,
    }
}

fn write_at(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(e, f)?;
        write!(f, ")")
    } else {
        write_expr(e, f)
    }
}

/// Exponents accept a leading sign without parentheses.
fn write_exponent(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Neg(inner) => {
            write!(f, "-")?;
            write_exponent(inner, f)
        }
        Expr::Num(x) if *x < 0.0 => write!(f, "-{}", -x),
        _ => write_at(e, P_POW, f),
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(x) if *x < 0.0 => write!(f, "-{}", -x),
        Expr::Num(x) => write!(f, "{x}"),
        Expr::Var(v) => write!(f, "{v}"),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_at(a, P_NEG, f)
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, f)?;
            write!(f, ")")
        }
        Expr::Bin(op, a, b) => {
            let (sym, p) = match op {
                BinOp::Add => (" + ", P_ADD),
                BinOp::Sub => (" - ", P_ADD),
                BinOp::Mul => ("*", P_MUL),
                BinOp::Div => ("/", P_MUL),
                BinOp::Pow => ("^", P_POW),
            };
            if *op == BinOp::Pow {
                write_at(a, P_ATOM, f)?;
                write!(f, "{sym}")?;
                return write_exponent(b, f);
            }
            write_at(a, p, f)?;
            write!(f, "{sym}")?;
            write_at(b, p + 1, f)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;

    fn roundtrip(s: &str) -> String {
        parse(s).unwrap().to_string()
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(roundtrip("(a+b)*c"), "(a + b)*c");
        assert_eq!(roundtrip("a-(b-c)"), "a - (b - c)");
        assert_eq!(roundtrip("(-x)^2"), "(-x)^2");
        assert_eq!(roundtrip("-x^2"), "-x^2");
        assert_eq!(roundtrip("x^-2"), "x^-2");
        assert_eq!(roundtrip("(x^2)^3"), "(x^2)^3");
        assert_eq!(roundtrip("1/(1+y^2)"), "1/(1 + y^2)");
    }
}
