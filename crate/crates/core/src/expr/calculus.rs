//! Exact differentiation and algebraic simplification.

use std::cmp::Ordering;

use super::{apply_pow, BinaryOp, Expr, UnaryOp};

impl Expr {
    /// Symbolic partial derivative with respect to `var`, simplified.
    ///
    /// `abs` differentiates to `sign(x)*x'` with `sign(0) = 0`.
    pub fn diff(&self, var: &str) -> Expr {
        self.derive(var).simplify()
    }

    fn derive(&self, var: &str) -> Expr {
        if !self.depends_on(var) {
            return Expr::zero();
        }
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(name) => {
                if name == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Unary(op, a) => {
                let da = a.derive(var);
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return Expr::neg(da),
                    UnaryOp::Sin => Expr::unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => Expr::neg(Expr::unary(UnaryOp::Sin, a)),
                    UnaryOp::Exp => Expr::unary(UnaryOp::Exp, a),
                    UnaryOp::Tanh => Expr::sub(
                        Expr::one(),
                        Expr::pow(Expr::unary(UnaryOp::Tanh, a), 2.0),
                    ),
                    UnaryOp::Sqrt => {
                        return Expr::div(
                            da,
                            Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                        )
                    }
                    UnaryOp::Abs => Expr::unary(UnaryOp::Sign, a),
                    UnaryOp::Log => return Expr::div(da, a),
                    UnaryOp::Sign => return Expr::zero(),
                };
                Expr::mul(outer, da)
            }
            Expr::Binary(op, a, b) => {
                let (da, db) = (a.derive(var), b.derive(var));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => Expr::add(Expr::mul(da, b), Expr::mul(a, db)),
                    BinaryOp::Div => Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                        Expr::pow(b, 2.0),
                    ),
                }
            }
            Expr::Pow(a, p) => {
                let da = a.derive(var);
                Expr::mul(
                    Expr::mul(Expr::Const(*p), Expr::pow((**a).clone(), p - 1.0)),
                    da,
                )
            }
        }
    }

    /// Constant folding, 0/1 identities and a canonical operand order for
    /// `+` and `*`. Never changes the value at points where the original
    /// evaluates successfully.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => simplify_unary(*op, a.simplify()),
            Expr::Binary(op, a, b) => simplify_binary(*op, a.simplify(), b.simplify()),
            Expr::Pow(a, p) => simplify_pow(a.simplify(), *p),
        }
    }
}

fn fold(e: Expr) -> Expr {
    match e.eval(&Default::default()) {
        Ok(v) if e.free_vars().is_empty() => Expr::Const(v),
        _ => e,
    }
}

fn simplify_unary(op: UnaryOp, a: Expr) -> Expr {
    match (op, a) {
        (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, inner)) => *inner,
        (UnaryOp::Neg, Expr::Const(c)) => Expr::Const(-c),
        (op, a @ Expr::Const(_)) => fold(Expr::unary(op, a)),
        (op, a) => Expr::unary(op, a),
    }
}

/// Total order used to canonicalize commutative operands: constants first,
/// then by printed form.
fn canonical_cmp(a: &Expr, b: &Expr) -> Ordering {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => x.total_cmp(y),
        (Expr::Const(_), _) => Ordering::Less,
        (_, Expr::Const(_)) => Ordering::Greater,
        _ => a.to_string().cmp(&b.to_string()),
    }
}

fn simplify_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Some(_), Some(_)) = (a.as_const(), b.as_const()) {
        return fold(Expr::binary(op, a, b));
    }
    match op {
        BinaryOp::Add => {
            if a.is_zero() {
                return b;
            }
            if b.is_zero() {
                return a;
            }
            if let Expr::Unary(UnaryOp::Neg, nb) = b {
                return simplify_binary(BinaryOp::Sub, a, *nb);
            }
            if canonical_cmp(&a, &b) == Ordering::Greater {
                Expr::add(b, a)
            } else {
                Expr::add(a, b)
            }
        }
        BinaryOp::Sub => {
            if b.is_zero() {
                return a;
            }
            if a.is_zero() {
                return simplify_unary(UnaryOp::Neg, b);
            }
            if a == b {
                return Expr::zero();
            }
            if let Expr::Unary(UnaryOp::Neg, nb) = b {
                return simplify_binary(BinaryOp::Add, a, *nb);
            }
            Expr::sub(a, b)
        }
        BinaryOp::Mul => {
            if a.is_zero() || b.is_zero() {
                return Expr::zero();
            }
            if a.is_one() {
                return b;
            }
            if b.is_one() {
                return a;
            }
            if a.as_const() == Some(-1.0) {
                return simplify_unary(UnaryOp::Neg, b);
            }
            if b.as_const() == Some(-1.0) {
                return simplify_unary(UnaryOp::Neg, a);
            }
            match (a, b) {
                (Expr::Unary(UnaryOp::Neg, na), b) => {
                    simplify_unary(UnaryOp::Neg, simplify_binary(BinaryOp::Mul, *na, b))
                }
                (a, Expr::Unary(UnaryOp::Neg, nb)) => {
                    simplify_unary(UnaryOp::Neg, simplify_binary(BinaryOp::Mul, a, *nb))
                }
                (a, b) if a == b => Expr::pow(a, 2.0),
                (a, b) => {
                    if canonical_cmp(&a, &b) == Ordering::Greater {
                        Expr::mul(b, a)
                    } else {
                        Expr::mul(a, b)
                    }
                }
            }
        }
        BinaryOp::Div => {
            if a.is_zero() {
                return Expr::zero();
            }
            if b.is_one() {
                return a;
            }
            if a == b {
                return Expr::one();
            }
            Expr::div(a, b)
        }
    }
}

fn simplify_pow(a: Expr, p: f64) -> Expr {
    if p == 0.0 {
        return Expr::one();
    }
    if p == 1.0 {
        return a;
    }
    if let Expr::Const(c) = a {
        return match apply_pow(c, p) {
            Ok(v) => Expr::Const(v),
            Err(_) => Expr::pow(Expr::Const(c), p),
        };
    }
    Expr::pow(a, p)
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Binding};

    fn at(e: &crate::expr::Expr, name: &str, v: f64) -> f64 {
        e.eval(&Binding::new().with(name, v)).unwrap()
    }

    #[test]
    fn derivative_of_gaussian_factor() {
        let d = parse("exp(-t^2)").unwrap().diff("t");
        let reference = parse("-2*t*exp(-t^2)").unwrap();
        for t in [-1.3, -0.2, 0.0, 0.7, 2.1] {
            let (x, y) = (at(&d, "t", t), at(&reference, "t", t));
            assert!((x - y).abs() <= 1e-15 * (1.0 + y.abs()), "{t}: {x} vs {y}");
        }
    }

    #[test]
    fn product_derivative() {
        assert_eq!(parse("y1*y2").unwrap().diff("y1").to_string(), "y2");
    }

    #[test]
    fn derivative_without_occurrence_is_zero() {
        assert!(parse("sin(y1)*y2").unwrap().diff("t").is_zero());
    }

    #[test]
    fn logistic_derivative_matches_frozen_value() {
        // 2e^-1/(e^-1+1)^2, frozen from a central difference with step 1e-6
        let d = parse("1/(exp(-t^2)+1)").unwrap().diff("t");
        let v = at(&d, "t", 1.0);
        let em1 = (-1.0f64).exp();
        assert!((v - 2.0 * em1 / (em1 + 1.0).powi(2)).abs() < 1e-15);
        assert!((v - 0.393_223).abs() < 1e-5);
    }

    #[test]
    fn abs_uses_sign_convention() {
        let d = parse("abs(t)").unwrap().diff("t");
        assert_eq!(at(&d, "t", 0.0), 0.0);
        assert_eq!(at(&d, "t", -2.0), -1.0);
    }

    #[test]
    fn simplify_examples() {
        assert_eq!(parse("0*sin(t)+y1").unwrap().simplify().to_string(), "y1");
        assert_eq!(parse("x^1").unwrap().simplify().to_string(), "x");
        assert!(parse("y1+y2").unwrap().diff("t").simplify().is_zero());
        assert_eq!(parse("2*3+t*1").unwrap().simplify().to_string(), "6+t");
        assert_eq!(parse("b*a-a*b").unwrap().simplify().to_string(), "0");
        assert_eq!(parse("(1+t)*(1+t)").unwrap().simplify().to_string(), "(1+t)^2");
    }

    #[test]
    fn simplify_keeps_domain_errors_unfolded() {
        let e = parse("log(0-1)+t").unwrap().simplify();
        assert!(e.eval(&Binding::new().with("t", 1.0)).is_err());
    }
}
