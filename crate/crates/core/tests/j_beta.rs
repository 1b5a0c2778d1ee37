use heatbie::bie::assemble_j_beta;
use heatbie::potentials::{assemble_cross, assemble_v, assemble_w_star, CrossKind};
use heatbie::verify::smooth_random_density;
use heatbie::{BoundaryCurve, BoundaryMesh, Density, Point, SpaceTimeGrid};

fn annulus() -> (BoundaryCurve, BoundaryCurve) {
    (
        BoundaryCurve::circle(Point::zeros(), 1.0).unwrap(),
        BoundaryCurve::circle(Point::zeros(), 0.4).unwrap(),
    )
}

fn constant(grid: &SpaceTimeGrid, v: f64) -> Density {
    Density::from_fn(grid.steps, grid.nodes, |_, _| v)
}

#[test]
fn zero_pair_maps_to_zero_and_zero_rhs_solves_to_zero() {
    let (o, i) = annulus();
    let grid = SpaceTimeGrid::new(0.5, 8, 32).unwrap();
    let j = assemble_j_beta(&o, &i, &grid, &constant(&grid, 1.0)).unwrap();
    let zero = Density::zeros(grid.steps, 32);
    let (a, b) = j.apply(&zero, &zero);
    assert_eq!(a.sup_norm(), 0.0);
    assert_eq!(b.sup_norm(), 0.0);
    let (mu, eta) = j.solve(&zero, &zero).unwrap();
    assert!(mu.sup_norm() <= 1e-12 && eta.sup_norm() <= 1e-12);
}

#[test]
fn beta_zero_row_decomposes_into_independent_pieces() {
    let (o, i) = annulus();
    let grid = SpaceTimeGrid::new(0.5, 6, 32).unwrap();
    let j = assemble_j_beta(&o, &i, &grid, &Density::zeros(grid.steps, 32)).unwrap();
    let outer = BoundaryMesh::new(&o, 32).unwrap();
    let inner = BoundaryMesh::new(&i, 32).unwrap();
    let mu = smooth_random_density(&grid, 21);
    let eta = smooth_random_density(&grid, 22);
    let (_, row2) = j.apply(&mu, &eta);
    let mut expected = assemble_w_star(&inner, &grid).unwrap().apply(&eta);
    expected.axpy(-0.5, &eta);
    expected.axpy(
        1.0,
        &assemble_cross(&outer, &inner, &grid, CrossKind::NormalDerivative)
            .unwrap()
            .apply(&mu),
    );
    assert!(row2.difference(&expected).sup_norm() <= 1e-13 * expected.sup_norm().max(1.0));

    // With β ≠ 0 the extra term is exactly −β·(cross value + V_ω).
    let beta = Density::from_fn(grid.steps, 32, |m, k| 0.5 + 0.1 * (m + k) as f64);
    let jb = assemble_j_beta(&o, &i, &grid, &beta).unwrap();
    let (_, row2b) = jb.apply(&mu, &eta);
    let mut h = assemble_cross(&outer, &inner, &grid, CrossKind::Value)
        .unwrap()
        .apply(&mu);
    h.axpy(1.0, &assemble_v(&inner, &grid).unwrap().apply(&eta));
    expected.axpy(-1.0, &beta.hadamard(&h));
    assert!(row2b.difference(&expected).sup_norm() <= 1e-13 * expected.sup_norm().max(1.0));
}

#[test]
fn same_time_block_is_well_conditioned_and_stable_in_time_step() {
    let (o, i) = annulus();
    let coarse = SpaceTimeGrid::new(0.5, 16, 64).unwrap();
    let fine = SpaceTimeGrid::new(0.5, 32, 64).unwrap();
    let s1 = assemble_j_beta(&o, &i, &coarse, &constant(&coarse, 1.0))
        .unwrap()
        .smallest_singular_value();
    let s2 = assemble_j_beta(&o, &i, &fine, &constant(&fine, 1.0))
        .unwrap()
        .smallest_singular_value();
    println!("sigma_min: {s1:.4e} -> {s2:.4e}");
    assert!(s1 > 1e-6 && s2 > 1e-6);
    assert!((s2 / s1 - 1.0).abs() <= 0.2, "{s1} vs {s2}");
}

#[test]
fn constant_beta_shares_one_factorization() {
    let (o, i) = annulus();
    let grid = SpaceTimeGrid::new(0.5, 8, 16).unwrap();
    assert_eq!(
        assemble_j_beta(&o, &i, &grid, &constant(&grid, 2.0))
            .unwrap()
            .distinct_factors(),
        1
    );
    let varying = Density::from_fn(grid.steps, 16, |m, _| m as f64);
    assert_eq!(assemble_j_beta(&o, &i, &grid, &varying).unwrap().distinct_factors(), 8);
}

#[test]
fn round_trip_on_random_pairs() {
    let outer = BoundaryCurve::star(Point::new(0.1, 0.0), 1.0, 0.1, 5).unwrap();
    let inner = BoundaryCurve::circle(Point::new(0.0, 0.05), 0.35).unwrap();
    let grid = SpaceTimeGrid::new(0.5, 16, 48).unwrap();
    let beta = Density::sample(&grid, 48, |t, j| 1.0 + t + 0.1 * (j as f64).cos());
    let j = assemble_j_beta(&outer, &inner, &grid, &beta).unwrap();
    for seed in 0..3 {
        let mu = smooth_random_density(&grid, 100 + seed);
        let eta = smooth_random_density(&grid, 200 + seed);
        let (r1, r2) = j.apply(&mu, &eta);
        let (m2, e2) = j.solve(&r1, &r2).unwrap();
        let err = m2.difference(&mu).sup_norm().max(e2.difference(&eta).sup_norm());
        assert!(err <= 1e-9, "seed {seed}: {err:e}");
        let scale = r1.sup_norm().max(r2.sup_norm());
        assert!(j.residual(&m2, &e2, &r1, &r2) <= 1e-10 * scale);
    }
}

#[test]
fn truncating_the_right_hand_side_leaves_earlier_steps_unchanged() {
    let (o, i) = annulus();
    let grid = SpaceTimeGrid::new(0.5, 10, 32).unwrap();
    let j = assemble_j_beta(&o, &i, &grid, &constant(&grid, 1.0)).unwrap();
    let r1 = smooth_random_density(&grid, 5);
    let r2 = smooth_random_density(&grid, 6);
    let (mu, eta) = j.solve(&r1, &r2).unwrap();
    let cut = 4;
    let (mu_t, eta_t) = j.solve(&r1.truncated_after(cut), &r2.truncated_after(cut)).unwrap();
    for m in 0..=cut {
        for (a, b) in [(&mu, &mu_t), (&eta, &eta_t)] {
            let diff = a
                .row(m)
                .iter()
                .zip(b.row(m))
                .fold(0.0f64, |d, (x, y)| d.max((x - y).abs()));
            assert!(diff <= 1e-13, "row {m}: {diff:e}");
        }
    }
}

#[test]
fn overlapping_geometry_is_rejected() {
    let outer = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
    let inner = BoundaryCurve::circle(Point::new(0.8, 0.0), 0.4).unwrap();
    let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
    assert!(assemble_j_beta(&outer, &inner, &grid, &constant(&grid, 1.0)).is_err());
}
