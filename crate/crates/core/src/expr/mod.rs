//! Small expression language used to declare diffeomorphisms, nonlinearities
//! and manufactured solutions.
//!
//! Expressions are immutable trees over named real variables. They can be
//! parsed from text, printed back, evaluated against a [`Binding`] (or, for
//! hot loops, compiled to slot-indexed form with [`Expr::compile`]),
//! differentiated exactly and simplified.
//!
//! Evaluation never returns a silent NaN: every node checks its domain
//! (division by zero, square root of a negative number, logarithm of a
//! nonpositive number, fractional power of a negative base) and any
//! non-finite intermediate is reported as an [`EvalError`].

mod calculus;
mod display;
mod parser;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use parser::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Abs,
    Log,
    /// Sign function with `sign(0) = 0`; appears as the derivative of `abs`.
    Sign,
}

impl UnaryOp {
    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "tanh" => UnaryOp::Tanh,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "log" => UnaryOp::Log,
            "sign" => UnaryOp::Sign,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Log => "log",
            UnaryOp::Sign => "sign",
        }
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        let value = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::Domain { op: "sqrt", arg: x });
                }
                x.sqrt()
            }
            UnaryOp::Abs => x.abs(),
            UnaryOp::Log => {
                if x <= 0.0 {
                    return Err(EvalError::Domain { op: "log", arg: x });
                }
                x.ln()
            }
            UnaryOp::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        finite(self.name(), value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let value = match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a / b
            }
        };
        finite("arithmetic", value)
    }
}

fn apply_pow(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(EvalError::Domain { op: "pow", arg: base });
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    let value = if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    };
    finite("pow", value)
}

fn finite(op: &'static str, value: f64) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite { op })
    }
}

/// Expression tree. Powers carry a constant exponent only, which keeps
/// differentiation total.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain violation in {op}: argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("non-finite result in {op}")]
    NonFinite { op: &'static str },
}

/// Variable name to value map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    values: HashMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

impl<'a> FromIterator<(&'a str, f64)> for Binding {
    fn from_iter<I: IntoIterator<Item = (&'a str, f64)>>(iter: I) -> Self {
        Binding {
            values: iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    pub fn one() -> Self {
        Expr::Const(1.0)
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Div, lhs, rhs)
    }

    pub fn neg(arg: Expr) -> Self {
        Self::unary(UnaryOp::Neg, arg)
    }

    pub fn pow(base: Expr, exponent: f64) -> Self {
        Expr::Pow(Box::new(base), exponent)
    }

    /// Left-folded sum; the empty sum is zero.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Self {
        terms
            .into_iter()
            .reduce(Expr::add)
            .unwrap_or_else(Expr::zero)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(name) => name == var,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    /// Replace every occurrence of each named variable by the mapped
    /// expression (simultaneous substitution).
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(map)),
            Expr::Pow(a, p) => Expr::pow(a.substitute(map), *p),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(map), b.substitute(map)),
        }
    }

    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => binding
                .get(name)
                .ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Unary(op, a) => op.apply(a.eval(binding)?),
            Expr::Binary(op, a, b) => op.apply(a.eval(binding)?, b.eval(binding)?),
            Expr::Pow(a, p) => apply_pow(a.eval(binding)?, *p),
        }
    }

    /// Resolve variable names to positions in `slots` so the expression can
    /// be evaluated from a plain slice.
    pub fn compile(&self, slots: &[&str]) -> Result<CompiledExpr, EvalError> {
        Ok(CompiledExpr {
            root: self.lower(slots)?,
            arity: slots.len(),
        })
    }

    fn lower(&self, slots: &[&str]) -> Result<Node, EvalError> {
        Ok(match self {
            Expr::Const(c) => Node::Const(*c),
            Expr::Var(name) => Node::Slot(
                slots
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))?,
            ),
            Expr::Unary(op, a) => Node::Unary(*op, Box::new(a.lower(slots)?)),
            Expr::Pow(a, p) => Node::Pow(Box::new(a.lower(slots)?), *p),
            Expr::Binary(op, a, b) => {
                Node::Binary(*op, Box::new(a.lower(slots)?), Box::new(b.lower(slots)?))
            }
        })
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
}

impl Node {
    fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Slot(i) => Ok(values[*i]),
            Node::Unary(op, a) => op.apply(a.eval(values)?),
            Node::Binary(op, a, b) => op.apply(a.eval(values)?, b.eval(values)?),
            Node::Pow(a, p) => apply_pow(a.eval(values)?, *p),
        }
    }
}

/// Expression with variables resolved to slice positions.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    arity: usize,
}

impl CompiledExpr {
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Panics if `values` is shorter than the slot list used to compile.
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        assert!(values.len() >= self.arity, "slot slice too short");
        self.root.eval(values)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        display::write_expr(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_logistic_scaling_at_zero() {
        let e = parse("1/(exp(-t^2)+1)").unwrap();
        assert_eq!(e.eval(&Binding::new().with("t", 0.0)).unwrap(), 0.5);
        let h = parse("exp(-t^2)+1").unwrap();
        assert_eq!(h.eval(&Binding::new().with("t", 0.0)).unwrap(), 2.0);
    }

    #[test]
    fn eval_identity_variable() {
        let e = parse("y1").unwrap();
        assert_eq!(e.eval(&Binding::new().with("y1", 3.25)).unwrap(), 3.25);
    }

    #[test]
    fn eval_reports_unbound_and_domain_errors() {
        let e = parse("x1 + y1").unwrap();
        assert_eq!(
            e.eval(&Binding::new().with("x1", 1.0)),
            Err(EvalError::Unbound("y1".into()))
        );
        let b = Binding::new().with("t", 0.0);
        assert_eq!(parse("1/t").unwrap().eval(&b), Err(EvalError::DivisionByZero));
        assert!(matches!(
            parse("log(t)").unwrap().eval(&b),
            Err(EvalError::Domain { op: "log", .. })
        ));
        assert!(matches!(
            parse("sqrt(t-1)").unwrap().eval(&b),
            Err(EvalError::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(
            parse("(t-1)^0.5").unwrap().eval(&b),
            Err(EvalError::Domain { op: "pow", .. })
        ));
        assert!(matches!(
            parse("exp(1000+t)").unwrap().eval(&b),
            Err(EvalError::NonFinite { .. })
        ));
    }

    #[test]
    fn compiled_matches_tree_eval() {
        let e = parse("sin(u)*y1 + t^2/(1+u^2)").unwrap();
        let c = e.compile(&["t", "y1", "u"]).unwrap();
        let b = Binding::new().with("t", 0.3).with("y1", -1.2).with("u", 2.0);
        assert_eq!(c.eval(&[0.3, -1.2, 2.0]).unwrap(), e.eval(&b).unwrap());
        assert!(matches!(e.compile(&["t"]), Err(EvalError::Unbound(_))));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x1*x2").unwrap();
        let map: HashMap<String, Expr> = [
            ("x1".to_string(), parse("x2").unwrap()),
            ("x2".to_string(), parse("x1").unwrap()),
        ]
        .into_iter()
        .collect();
        assert_eq!(e.substitute(&map).to_string(), "x2*x1");
    }

    #[test]
    fn free_vars_and_sum() {
        let e = parse("sin(u)*y1 + t").unwrap();
        let vars: Vec<_> = e.free_vars().into_iter().collect();
        assert_eq!(vars, ["t", "u", "y1"]);
        assert!(Expr::sum(Vec::new()).is_zero());
    }
}
