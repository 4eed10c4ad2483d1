use microkin::expr::{parse_expression, BinOp, Expr, Func};
use microkin::Error;
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0usize..3).prop_map(Expr::Var),
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..100.0, 1e-8f64..1e-3].prop_map(Expr::Num),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Sqrt)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Bin(o, Box::new(a), Box::new(b))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn printed_trees_parse_back(e in tree()) {
        let text = e.to_string();
        let back = parse_expression(&text).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn evaluation_is_total_or_guarded(e in tree(), x in prop::array::uniform3(-2.0f64..2.0)) {
        match e.eval(&x) {
            Ok(v) => prop_assert!(v.is_finite()),
            Err(err) => prop_assert!(matches!(err, Error::Domain(_))),
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[-+*/() .,0-9eEXsincoxpqrt123]{0,24}") {
        if let Err(Error::Syntax { offset, .. }) = parse_expression(&text) {
            prop_assert!(offset <= text.len());
        }
    }
}
