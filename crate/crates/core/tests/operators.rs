mod common;

use common::{brute_layer, brute_normal_derivative, rel};
use heatbie::potentials::{
    assemble_cross, assemble_v, assemble_w, assemble_w_star, eval_double_layer, eval_normal_derivative_single_layer,
    eval_single_layer, BlockOperator, CrossKind, Probe, Side,
};
use heatbie::verify::smooth_random_density;
use heatbie::{BoundaryCurve, BoundaryMesh, Density, Point, SpaceTimeGrid};

fn unit_circle() -> BoundaryCurve {
    BoundaryCurve::circle(Point::zeros(), 1.0).unwrap()
}

fn ones(grid: &SpaceTimeGrid) -> Density {
    Density::from_fn(grid.steps, grid.nodes, |_, _| 1.0)
}

fn all_operators(grid: &SpaceTimeGrid) -> Vec<BlockOperator> {
    let outer = BoundaryMesh::new(&unit_circle(), grid.nodes).unwrap();
    let star = BoundaryCurve::star(Point::new(0.05, 0.0), 0.4, 0.05, 3).unwrap();
    let inner = BoundaryMesh::new(&star, grid.nodes).unwrap();
    vec![
        assemble_v(&outer, grid).unwrap(),
        assemble_w(&outer, grid).unwrap(),
        assemble_w_star(&outer, grid).unwrap(),
        assemble_cross(&inner, &outer, grid, CrossKind::Value).unwrap(),
        assemble_cross(&inner, &outer, grid, CrossKind::NormalDerivative).unwrap(),
        assemble_cross(&outer, &inner, grid, CrossKind::Value).unwrap(),
        assemble_v(&inner, grid).unwrap(),
        assemble_w_star(&inner, grid).unwrap(),
    ]
}

#[test]
fn v_trace_of_constant_density_matches_brute_force() {
    let grid = SpaceTimeGrid::new(0.5, 16, 64).unwrap();
    let curve = unit_circle();
    let mesh = BoundaryMesh::new(&curve, 64).unwrap();
    let out = assemble_v(&mesh, &grid).unwrap().apply(&ones(&grid));
    let m = grid.steps;
    let t = grid.time(m);
    let oracle = brute_layer(&curve, t, mesh.points[0], false, grid.step(), &|_| 1.0, &|_| 1.0);
    let got = out.get(m, 0);
    assert!(rel(got, oracle) <= 1e-3, "V = {got}, oracle {oracle}");
}

#[test]
fn zero_density_maps_to_zero() {
    let grid = SpaceTimeGrid::new(0.5, 6, 16).unwrap();
    for op in all_operators(&grid) {
        let zero = Density::zeros(grid.steps, op.sources());
        assert!(op.apply(&zero).values().iter().all(|&v| v == 0.0), "{:?}", op.kind());
    }
}

#[test]
fn double_layer_operators_are_rotation_invariant_on_circles() {
    let grid = SpaceTimeGrid::new(0.5, 8, 32).unwrap();
    let mesh = BoundaryMesh::new(&BoundaryCurve::circle(Point::new(0.3, -0.2), 0.8).unwrap(), 32).unwrap();
    let density = Density::from_fn(grid.steps, grid.nodes, |m, _| 1.0 + (m as f64).sqrt());
    for op in [
        assemble_w(&mesh, &grid).unwrap(),
        assemble_w_star(&mesh, &grid).unwrap(),
    ] {
        let out = op.apply(&density);
        for m in 1..=grid.steps {
            let row = out.row(m);
            let spread = row.iter().fold(0.0f64, |a, v| a.max((v - row[0]).abs()));
            assert!(spread <= 1e-12, "{:?} row {m}: {spread:e}", op.kind());
        }
    }
}

#[test]
fn cross_operators_match_brute_force() {
    let grid = SpaceTimeGrid::new(0.5, 6, 64).unwrap();
    let outer = unit_circle();
    let inner = BoundaryCurve::circle(Point::zeros(), 0.4).unwrap();
    let (outer_mesh, inner_mesh) = (
        BoundaryMesh::new(&outer, 64).unwrap(),
        BoundaryMesh::new(&inner, 64).unwrap(),
    );
    let c = |k: usize| 1.0 + 0.5 * (k as f64).sin();
    let p = |phi: f64| 1.0 + 0.3 * phi.cos() - 0.2 * (2.0 * phi).sin();
    let params = grid.params();
    let density = Density::from_fn(grid.steps, 64, |m, j| c(m) * p(params[j]));
    let value = assemble_cross(&inner_mesh, &outer_mesh, &grid, CrossKind::Value)
        .unwrap()
        .apply(&density);
    let normal = assemble_cross(&outer_mesh, &inner_mesh, &grid, CrossKind::NormalDerivative)
        .unwrap()
        .apply(&density);
    let m = grid.steps;
    let t = grid.time(m);
    for i in [0, 21, 40] {
        let oracle = brute_layer(&inner, t, outer_mesh.points[i], false, grid.step(), &c, &p);
        assert!(
            rel(value.get(m, i), oracle) <= 1e-6,
            "value node {i}: {} vs {oracle}",
            value.get(m, i)
        );
        let oracle = brute_normal_derivative(
            &outer,
            t,
            inner_mesh.points[i],
            inner_mesh.normals[i],
            grid.step(),
            &c,
            &p,
        );
        assert!(
            rel(normal.get(m, i), oracle) <= 1e-6,
            "normal node {i}: {} vs {oracle}",
            normal.get(m, i)
        );
    }
}

#[test]
fn cross_normal_derivative_path_agrees_with_assembly() {
    let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
    let outer = BoundaryMesh::new(&unit_circle(), 16).unwrap();
    let inner = BoundaryMesh::new(&BoundaryCurve::circle(Point::zeros(), 0.4).unwrap(), 16).unwrap();
    let density = smooth_random_density(&grid, 3);
    let direct = assemble_cross(&inner, &outer, &grid, CrossKind::NormalDerivative)
        .unwrap()
        .apply(&density);
    let via = eval_normal_derivative_single_layer(&inner, &grid, &density, &outer, Side::Exterior).unwrap();
    assert_eq!(direct, via);
}

#[test]
fn touching_boundaries_are_rejected() {
    let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
    let a = BoundaryMesh::new(&unit_circle(), 16).unwrap();
    let b = BoundaryMesh::new(&BoundaryCurve::circle(Point::new(0.5, 0.0), 0.5).unwrap(), 16).unwrap();
    assert!(assemble_cross(&a, &b, &grid, CrossKind::Value).is_err());
}

#[test]
fn one_sided_normal_derivatives_differ_by_the_density() {
    let grid = SpaceTimeGrid::new(0.5, 8, 32).unwrap();
    let mesh = BoundaryMesh::new(&unit_circle(), 32).unwrap();
    let density = smooth_random_density(&grid, 11);
    let plus = eval_normal_derivative_single_layer(&mesh, &grid, &density, &mesh, Side::Interior).unwrap();
    let minus = eval_normal_derivative_single_layer(&mesh, &grid, &density, &mesh, Side::Exterior).unwrap();
    let jump = plus.difference(&minus).difference(&density);
    assert!(jump.sup_norm() <= 1e-15 * density.sup_norm().max(1.0));
}

#[test]
fn field_potentials_match_brute_force_off_the_boundary() {
    let grid = SpaceTimeGrid::new(0.5, 8, 64).unwrap();
    let curve = unit_circle();
    let mesh = BoundaryMesh::new(&curve, 64).unwrap();
    let density = ones(&grid);
    let probe = Probe::new(0.5, Point::new(2.0, 0.0));
    let single = eval_single_layer(&mesh, &grid, &density, &[probe]).unwrap()[0];
    let oracle = brute_layer(&curve, 0.5, probe.x, false, grid.step(), &|_| 1.0, &|_| 1.0);
    assert!(rel(single, oracle) <= 1e-6, "single {single} vs {oracle}");
    let double = eval_double_layer(&mesh, &grid, &density, &[probe]).unwrap()[0];
    let oracle = brute_layer(&curve, 0.5, probe.x, true, grid.step(), &|_| 1.0, &|_| 1.0);
    assert!(rel(double, oracle) <= 1e-6, "double {double} vs {oracle}");
}

#[test]
fn field_potentials_vanish_for_zero_density_and_at_time_zero() {
    let grid = SpaceTimeGrid::new(0.5, 8, 32).unwrap();
    let mesh = BoundaryMesh::new(&unit_circle(), 32).unwrap();
    let probes = [
        Probe::new(0.0, Point::new(2.0, 0.0)),
        Probe::new(0.4, Point::new(0.2, 0.1)),
    ];
    let zero = Density::zeros(grid.steps, 32);
    let dense = smooth_random_density(&grid, 1);
    for f in [eval_single_layer, eval_double_layer] {
        assert!(f(&mesh, &grid, &zero, &probes).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(f(&mesh, &grid, &dense, &probes[..1]).unwrap()[0], 0.0);
    }
}

#[test]
fn probes_on_the_boundary_are_rejected() {
    let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
    let mesh = BoundaryMesh::new(&unit_circle(), 16).unwrap();
    let density = ones(&grid);
    let on = [Probe::new(0.3, Point::new(1.0, 0.0))];
    assert!(eval_single_layer(&mesh, &grid, &density, &on).is_err());
    assert!(eval_double_layer(&mesh, &grid, &density, &on).is_err());
}

#[test]
fn causality_and_initial_row_are_exact() {
    let grid = SpaceTimeGrid::new(0.5, 6, 16).unwrap();
    for op in all_operators(&grid) {
        let d = Density::from_fn(grid.steps, op.sources(), |m, j| ((m * 7 + j * 3) as f64).sin());
        let full = op.apply(&d);
        assert!(full.row(0).iter().all(|&v| v == 0.0));
        for cut in 1..=grid.steps {
            let truncated = op.apply(&d.truncated_after(cut - 1));
            for m in 0..cut {
                assert_eq!(full.row(m), truncated.row(m), "{:?} cut {cut} row {m}", op.kind());
            }
        }
    }
}

#[test]
fn toeplitz_blocks_do_not_depend_on_the_horizon() {
    // The first lags of a longer run reuse the blocks of a shorter one bitwise.
    let short = SpaceTimeGrid::new(0.25, 4, 16).unwrap();
    let long = SpaceTimeGrid::new(0.5, 8, 16).unwrap();
    let a = all_operators(&short);
    let b = all_operators(&long);
    for (x, y) in a.iter().zip(&b) {
        for lag in 0..short.steps {
            assert_eq!(x.block(lag), y.block(lag), "{:?} lag {lag}", x.kind());
        }
    }
}

#[test]
fn application_is_linear() {
    let grid = SpaceTimeGrid::new(0.5, 6, 16).unwrap();
    let d1 = smooth_random_density(&grid, 1);
    let d2 = smooth_random_density(&grid, 2);
    let mut combo = d1.scaled(0.7);
    combo.axpy(-1.3, &d2);
    for op in all_operators(&grid).into_iter().filter(|op| op.sources() == 16) {
        let lhs = op.apply(&combo);
        let mut rhs = op.apply(&d1).scaled(0.7);
        rhs.axpy(-1.3, &op.apply(&d2));
        let scale = lhs.sup_norm().max(1.0);
        assert!(lhs.difference(&rhs).sup_norm() <= 1e-13 * scale, "{:?}", op.kind());
    }
}
