use heatbie::config::parse_config;
use heatbie::dump::{decode_binary, decode_csv, encode_binary, encode_csv};
use heatbie::expr::Expression;
use heatbie::potentials::{assemble_v, assemble_w, BlockOperator, OperatorKind};
use heatbie::{BoundaryCurve, BoundaryMesh, Density, Point, SpaceTimeGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn operators() -> (SpaceTimeGrid, Vec<BlockOperator>) {
    let grid = SpaceTimeGrid::new(0.5, 6, 12).unwrap();
    let mesh = BoundaryMesh::new(&BoundaryCurve::star(Point::zeros(), 1.0, 0.1, 3).unwrap(), 12).unwrap();
    (
        grid,
        vec![assemble_v(&mesh, &grid).unwrap(), assemble_w(&mesh, &grid).unwrap()],
    )
}

fn density(values: &[f64]) -> Density {
    Density::from_fn(6, 12, |m, j| values[(m - 1) * 12 + j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_are_causal_linear_and_start_at_zero(
        a in prop::collection::vec(-10.0f64..10.0, 72),
        b in prop::collection::vec(-10.0f64..10.0, 72),
        alpha in -3.0f64..3.0,
        cut in 1usize..6,
    ) {
        let (_, ops) = operators();
        let (da, db) = (density(&a), density(&b));
        for op in &ops {
            let full = op.apply(&da);
            prop_assert!(full.row(0).iter().all(|&v| v == 0.0));
            let trunc = op.apply(&da.truncated_after(cut));
            for m in 0..=cut {
                prop_assert_eq!(full.row(m), trunc.row(m));
            }
            let mut combo = da.clone();
            combo.axpy(alpha, &db);
            let mut expected = full.clone();
            expected.axpy(alpha, &op.apply(&db));
            let scale = expected.sup_norm().max(1.0);
            prop_assert!(op.apply(&combo).difference(&expected).sup_norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn expression_parser_never_panics(src in "\\PC{0,64}") {
        if let Ok(e) = Expression::parse(&src) {
            let _ = e.eval(0.3, -1.2, 2.0);
        }
    }

    #[test]
    fn expression_parser_handles_operator_soup(src in "[-+*/^()tuθ0-9. a-z]{0,48}") {
        if let Ok(e) = Expression::parse(&src) {
            let _ = e.derivative_u(0.1, 0.0, 0.5);
        }
    }

    #[test]
    fn config_parser_never_panics(src in "\\PC{0,256}") {
        let _ = parse_config(&src);
    }

    #[test]
    fn dumps_round_trip_bitwise(
        blocks in 1usize..4,
        rows in 1usize..5,
        cols in 1usize..5,
        seed in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 80),
    ) {
        let mats = (0..blocks)
            .map(|k| DMatrix::from_fn(rows, cols, |i, j| seed[(k * 25 + i * 5 + j) % seed.len()]))
            .collect();
        let op = BlockOperator::new(OperatorKind::SingleLayer, mats).unwrap();
        prop_assert_eq!(&decode_binary(&encode_binary(&op)).unwrap(), &op);
        prop_assert_eq!(&decode_csv(&encode_csv(&op)).unwrap(), &op);
    }

    #[test]
    fn binary_decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_binary(&bytes);
        let mut framed = b"HBOP0001".to_vec();
        framed.extend_from_slice(&bytes);
        let _ = decode_binary(&framed);
    }

    #[test]
    fn csv_decoder_never_panics(text in "kind,block,row,col,value\n[a-z\\-,0-9.e\n]{0,200}") {
        let _ = decode_csv(&text);
    }
}
