use fkppg::pf::{ess, resample_multinomial, resample_systematic, systematic_indices};
use fkppg::rng::{RngStream, RESAMPLE_SLOT};
use fkppg::{parse_expr, parse_model, BinOp, Execution, Expr, Ppg, UnOp};
use proptest::prelude::*;

const UNARY: [UnOp; 3] = [UnOp::Neg, UnOp::Abs, UnOp::Not];
const BINARY: [BinOp; 14] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Min,
    BinOp::Max,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::And,
    BinOp::Or,
];

fn vars() -> Vec<String> {
    ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
}

fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(1.0),
        Just(-1.0),
        Just(0.5),
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
        -1e6..1e6f64,
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::lit), (0usize..3).prop_map(Expr::var)];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (0usize..3, inner.clone()).prop_map(|(op, a)| Expr::unary(UNARY[op], a)),
            (0usize..14, inner.clone(), inner).prop_map(|(op, a, b)| Expr::binary(BINARY[op], a, b)),
        ]
    })
}

fn store() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(literal(), 3)
}

fn same_outcome(a: &Result<f64, fkppg::EvalError>, b: &Result<f64, fkppg::EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits() || (*x == 0.0 && *y == 0.0),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64, Just(1.0)], 1..40)
        .prop_filter("positive total", |w| w.iter().sum::<f64>() > 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printing_round_trips(e in expr(), s in store()) {
        let names = vars();
        let printed = e.display(&names).to_string();
        let back = parse_expr(&printed, &names).unwrap();
        prop_assert_eq!(back.display(&names).to_string(), printed.clone());
        prop_assert!(same_outcome(&e.eval(&s), &back.eval(&s)), "{}", printed);
    }

    #[test]
    fn evaluation_never_yields_nan(e in expr(), s in store()) {
        if let Ok(v) = e.eval(&s) {
            prop_assert!(!v.is_nan());
        }
    }

    #[test]
    fn batch_matches_scalar(e in expr(), rows in prop::collection::vec(store(), 1..12)) {
        let cols: Vec<Vec<f64>> = (0..3).map(|v| rows.iter().map(|r| r[v]).collect()).collect();
        let idx: Vec<u32> = (0..rows.len() as u32).collect();
        match e.eval_batch(&cols, &idx) {
            Ok(out) => {
                for (r, v) in rows.iter().zip(out) {
                    prop_assert!(same_outcome(&e.eval(r), &Ok(v)));
                }
            }
            Err((pos, _)) => {
                prop_assert!(e.eval(&rows[pos]).is_err());
            }
        }
    }

    #[test]
    fn resampled_indices_carry_weight(w in weights(), n in 1usize..60, seed in any::<u64>()) {
        let stream = RngStream::new(seed, 3, RESAMPLE_SLOT);
        for idx in [
            resample_multinomial(&w, n, stream, Execution::Sequential).unwrap(),
            resample_systematic(&w, n, stream).unwrap(),
        ] {
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.iter().all(|&i| w[i as usize] > 0.0));
        }
    }

    #[test]
    fn systematic_counts_are_rounded_expectations(w in weights(), n in 1usize..60, u in 0.0..1.0f64) {
        let total: f64 = w.iter().sum();
        let idx = systematic_indices(&w, n, u).unwrap();
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        for (i, wi) in w.iter().enumerate() {
            let count = idx.iter().filter(|&&j| j as usize == i).count() as f64;
            prop_assert!((count - n as f64 * wi / total).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn ess_is_between_one_and_n(w in weights()) {
        let e = ess(&w).unwrap();
        prop_assert!(e >= 1.0 && e <= w.len() as f64);
    }

    #[test]
    fn statements_consume_one_uniform_each(p in 0.0..1.0f64, seed in any::<u64>()) {
        let src = format!(
            "vars a b c\nnode 0\nnil 1\ntrans 0 -> 1 when 1 == 1 do {{ a ~ bernoulli({p:?}); b := a + 1; c ~ uniform(0, 1); }}\ninit 0"
        );
        let g = Ppg::validate(&parse_model(&src).unwrap()).unwrap();
        let mut stream = RngStream::new(seed, 2, 0);
        let s = g.kernel_step(&g.initial_state(), &mut stream).unwrap();
        prop_assert_eq!(stream.position(), 2);
        let u0 = fkppg::rng::uniform_at(seed, 2, 0, 0);
        let u1 = fkppg::rng::uniform_at(seed, 2, 0, 1);
        prop_assert_eq!(s.store[0], if u0 < p { 1.0 } else { 0.0 });
        prop_assert_eq!(s.store[2], u1);
    }
}
