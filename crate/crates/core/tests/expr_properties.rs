use movingdom::expr::{parse, BinaryOp, Binding, Expr, UnaryOp};
use proptest::prelude::*;

const VARS: [&str; 3] = ["t", "y1", "u"];

/// Expressions whose every node is defined on all of R^3: guarded
/// arguments for sqrt/log/div, bounded inputs to exp.
fn guarded_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        prop::sample::select(VARS.to_vec()).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let positive = |e: Expr| Expr::add(Expr::pow(e, 2.0), Expr::one());
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Sin, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Cos, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Tanh, e)),
            inner
                .clone()
                .prop_map(|e| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Sin, e))),
            inner
                .clone()
                .prop_map(move |e| Expr::unary(UnaryOp::Sqrt, positive(e))),
            inner
                .clone()
                .prop_map(move |e| Expr::unary(UnaryOp::Log, positive(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| Expr::div(a, positive(b))),
            (inner.clone(), prop::sample::select(vec![2.0, 3.0, -1.0]))
                .prop_map(|(a, p)| Expr::pow(Expr::binary(BinaryOp::Add, Expr::pow(a, 2.0), Expr::Const(0.5)), p)),
        ]
    })
}

fn binding(values: [f64; 3]) -> Binding {
    VARS.iter().copied().zip(values).collect()
}

fn central_difference(e: &Expr, at: [f64; 3], which: usize, step: f64) -> f64 {
    let mut plus = at;
    let mut minus = at;
    plus[which] += step;
    minus[which] -= step;
    (e.eval(&binding(plus)).unwrap() - e.eval(&binding(minus)).unwrap()) / (2.0 * step)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_agrees_with_central_difference(
        e in guarded_expr(),
        which in 0usize..3,
        point in prop::array::uniform3(-1.5f64..1.5),
    ) {
        let d = e.diff(VARS[which]);
        let symbolic = d.eval(&binding(point)).unwrap();
        let fd = central_difference(&e, point, which, 1e-6);
        prop_assert!(
            (symbolic - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
            "{e} d/d{}: {symbolic} vs {fd}", VARS[which]
        );
    }

    #[test]
    fn simplify_preserves_value(
        e in guarded_expr(),
        point in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let b = binding(point);
        let before = e.eval(&b).unwrap();
        let after = e.simplify().eval(&b).unwrap();
        prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()), "{e}: {before} vs {after}");
    }

    #[test]
    fn print_then_parse_round_trips(
        e in guarded_expr(),
        point in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let printed = e.to_string();
        let reparsed = parse(&printed).unwrap();
        let b = binding(point);
        prop_assert_eq!(e.eval(&b).unwrap().to_bits(), reparsed.eval(&b).unwrap().to_bits(), "{}", printed);
    }
}

#[test]
fn logistic_derivative_against_difference_quotient() {
    let e = parse("1/(exp(-t^2)+1)").unwrap();
    let step = 1e-6;
    let f = |t: f64| e.eval(&Binding::new().with("t", t)).unwrap();
    let fd = (f(1.0 + step) - f(1.0 - step)) / (2.0 * step);
    let symbolic = e.diff("t").eval(&Binding::new().with("t", 1.0)).unwrap();
    assert!((symbolic - fd).abs() < 1e-9);
    assert!((fd - 0.39322).abs() < 1e-5);
}
