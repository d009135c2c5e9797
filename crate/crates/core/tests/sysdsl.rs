use mmcert::numkernel::SymMatrix;
use mmcert::problem::{EXAMPLE1, EXAMPLE2, EXAMPLE3};
use mmcert::sysdsl::{
    parse_config, parse_expr, render_config, EvalError, Expr, FieldConfig, ParseError, RegionConfig,
};
use proptest::prelude::*;

#[test]
fn single_linear_mode() {
    let cfg =
        parse_config("[system]\ndim = 2\nmode 1 { A = [[-1,0],[0,-1]]; region = all }\n").unwrap();
    let sys = cfg.system.unwrap();
    assert_eq!(sys.dim, 2);
    assert_eq!(sys.modes.len(), 1);
    assert!(matches!(sys.modes[0].region, RegionConfig::All));
    assert!(matches!(sys.modes[0].field, FieldConfig::Linear(_)));
}

#[test]
fn example3_config() {
    let cfg = parse_config(EXAMPLE3).unwrap();
    let sys = cfg.system.unwrap();
    assert_eq!((sys.dim, sys.modes.len()), (3, 2));
    let RegionConfig::Cone(q) = &sys.modes[0].region else {
        panic!()
    };
    assert_eq!(*q, SymMatrix::diag(&[1.0, 1.0, -1.0]));
}

#[test]
fn bundled_configs_parse() {
    for text in [EXAMPLE1, EXAMPLE2, EXAMPLE3] {
        let cfg = parse_config(text).unwrap();
        assert!(cfg.system.is_some() && cfg.basis.is_some());
    }
}

#[test]
fn empty_family_rejected() {
    let err = parse_config("[structure]\nS1 = {}\n").unwrap_err();
    assert!(
        matches!(err, ParseError::EmptyFamily { line: 2, .. }),
        "{err}"
    );
}

#[test]
fn syntax_error_has_position() {
    let err = parse_config("[system]\ndim = 2\nmode 1 { A = [[1, 2], [3 4]]; region = all }\n")
        .unwrap_err();
    let ParseError::Syntax { line, col, .. } = err else {
        panic!("{err:?}")
    };
    assert_eq!(line, 3);
    assert!(col > 1);
}

#[test]
fn non_symmetric_region_rejected() {
    let err =
        parse_config("[system]\ndim = 2\nmode 1 { A = [[1, 0], [0, 1]]; Q = [[1, 2], [0, 1]] }\n")
            .unwrap_err();
    assert!(matches!(err, ParseError::NonSymmetric { .. }), "{err:?}");
}

#[test]
fn dimension_mismatch_rejected() {
    let err = parse_config(
        "[system]\ndim = 2\nmode 1 { A = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]; region = all }\n",
    )
    .unwrap_err();
    assert!(matches!(err, ParseError::Dimension { .. }), "{err:?}");
}

#[test]
fn differentiate_examples() {
    let q = parse_expr("quadform([[5, 0], [0, 1]])", 2).unwrap();
    assert_eq!(q.differentiate(0).eval(&[1.0, 1.0]).unwrap(), 10.0);
    let a = parse_expr("atan(x1)", 1).unwrap();
    assert_eq!(a.differentiate(0).eval(&[0.0]).unwrap(), 1.0);
    assert_eq!(Expr::Const(3.0).differentiate(0).eval(&[]).unwrap(), 0.0);
}

#[test]
fn eval_examples() {
    let q = parse_expr("quadform([[1, 0], [0, 5]])", 2).unwrap();
    assert_eq!(q.eval(&[1.0, 1.0]).unwrap(), 6.0);
    let a = parse_expr("atan(x1)", 1).unwrap();
    assert!((a.eval(&[1.0]).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    assert_eq!(
        parse_expr("x1*x2", 2).unwrap().eval(&[3.0, -2.0]).unwrap(),
        -6.0
    );
}

#[test]
fn domain_error_names_subexpression() {
    let e = parse_expr("1 + sqrt(x1 - 2)", 1).unwrap();
    let err = e.eval(&[1.0]).unwrap_err();
    let EvalError::Domain { expr, .. } = &err else {
        panic!("{err:?}")
    };
    assert!(expr.contains("sqrt"), "{expr}");
}

#[test]
fn variable_out_of_range_rejected() {
    assert!(parse_expr("x3", 2).is_err());
}

#[test]
fn config_round_trip_fixed_point() {
    for text in [EXAMPLE1, EXAMPLE2, EXAMPLE3] {
        let once = render_config(&parse_config(text).unwrap());
        let twice = render_config(&parse_config(&once).unwrap());
        assert_eq!(once, twice);
        assert_eq!(
            parse_config(&once).unwrap().multipliers,
            parse_config(text).unwrap().multipliers
        );
    }
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(Expr::Const),
        (0usize..2).prop_map(Expr::Var)
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            inner.clone().prop_map(|a| Expr::Sin(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Cos(Box::new(a))),
            inner.prop_map(|a| Expr::Atan(Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn derivative_matches_central_difference(e in expr_strategy(), x0 in -1.5f64..1.5, x1 in -1.5f64..1.5, var in 0usize..2) {
        let h = 1e-6;
        let x = [x0, x1];
        let mut xp = x;
        let mut xm = x;
        xp[var] += h;
        xm[var] -= h;
        let fd = (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h);
        let d = e.differentiate(var).eval(&x).unwrap();
        prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "{e}: {d} vs {fd}");
    }

    #[test]
    fn print_parse_fixed_point(e in expr_strategy()) {
        let text = e.to_string();
        let back = parse_expr(&text, 2).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());
        let x = [0.3, -0.7];
        prop_assert!((back.eval(&x).unwrap() - e.eval(&x).unwrap()).abs() <= 1e-12 * (1.0 + e.eval(&x).unwrap().abs()));
    }
}
