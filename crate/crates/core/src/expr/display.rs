use std::fmt::{self, Write};

use super::{BinaryOp, Expr, UnaryOp};

// Binding strength; higher binds tighter.
const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => NEG,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Unary(UnaryOp::Neg, _) => NEG,
        Expr::Unary(..) => ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => ADD,
        Expr::Binary(..) => MUL,
        Expr::Pow(..) => POW,
    }
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write_child(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min {
        f.write_char('(')?;
        write_expr(e, f)?;
        f.write_char(')')
    } else {
        write_expr(e, f)
    }
}

pub(crate) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => f.write_str(&format_number(*c)),
        Expr::Var(name) => f.write_str(name),
        Expr::Unary(UnaryOp::Neg, a) => {
            f.write_char('-')?;
            write_child(a, NEG, f)
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_expr(a, f)?;
            f.write_char(')')
        }
        Expr::Binary(op, a, b) => {
            let own = match op {
                BinaryOp::Add | BinaryOp::Sub => ADD,
                BinaryOp::Mul | BinaryOp::Div => MUL,
            };
            write_child(a, own, f)?;
            f.write_char(op.symbol())?;
            // right operand binds strictly tighter so the tree shape survives a round trip
            write_child(b, own + 1, f)
        }
        Expr::Pow(a, p) => {
            write_child(a, ATOM, f)?;
            write!(f, "^{}", format_number(*p))
        }
    }
}
