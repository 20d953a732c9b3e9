use super::{add, call, div, mul, neg, pow, sub, BinOp, Expr, Func};

impl Expr {
    /// Exact derivative with respect to `var`, with light constant folding.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Bin(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => {
                        let num = sub(mul(da, b.clone()), mul(a, db));
                        div(num, pow(b, Expr::Num(2.0)))
                    }
                    BinOp::Pow => {
                        if !b.depends_on(var) {
                            // b * a^(b-1) * a'
                            let lowered = pow(a, sub(b.clone(), Expr::Num(1.0)));
                            mul(mul(b, lowered), da)
                        } else {
                            // a^b * (b' ln a + b a'/a)
                            let whole = pow(a.clone(), b.clone());
                            let t1 = mul(db, call(Func::Ln, a.clone()));
                            let t2 = div(mul(b, da), a);
                            mul(whole, add(t1, t2))
                        }
                    }
                }
            }
            Expr::Call(f, a) => {
                let da = a.differentiate(var);
                if da.is_num(0.0) {
                    return Expr::Num(0.0);
                }
                let a = a.as_ref().clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Tan => add(Expr::Num(1.0), pow(call(Func::Tan, a), Expr::Num(2.0))),
                    Func::Exp => call(Func::Exp, a),
                    Func::Ln => div(Expr::Num(1.0), a),
                    Func::Sqrt => div(Expr::Num(1.0), mul(Expr::Num(2.0), call(Func::Sqrt, a))),
                };
                mul(outer, da)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Compiled};

    fn eval1(src: &str, var: &str, at: f64) -> f64 {
        let e = parse(src).unwrap();
        let c = Compiled::new(&e, &[var.to_string()], &Default::default()).unwrap();
        c.eval(&[at]).unwrap()
    }

    #[test]
    fn derivative_of_identity() {
        let d = parse("y").unwrap().differentiate("y");
        assert_eq!(d.as_num(), Some(1.0));
    }

    #[test]
    fn derivative_of_rational_at_one() {
        let d = parse("1/(1+y^2)").unwrap().differentiate("y").to_string();
        assert!((eval1(&d, "y", 1.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_log_factor() {
        let d = parse("-0.5*ln(1+y^2)").unwrap().differentiate("y").to_string();
        assert!((eval1(&d, "y", 1.0) + 0.5).abs() < 1e-15);
        assert!((eval1(&d, "y", 2.0) + 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn variable_exponent() {
        let d = parse("y^y").unwrap().differentiate("y").to_string();
        let y: f64 = 1.7;
        let exact = y.powf(y) * (y.ln() + 1.0);
        assert!((eval1(&d, "y", y) - exact).abs() < 1e-13);
    }
}
