//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::kernel_moment_oracle;
use heatbie::bie::{assemble_j_beta, solve_second_kind, EquationKind};
use heatbie::config::parse_config;
use heatbie::kernel::{time_integrated_grad_s, time_integrated_s, Dimension, TimeSlab};
use heatbie::nonlinear::{
    check_growth_condition, solve_nonlinear, Family, FixedPointConfig, MixedSystem, RobinNonlinearity,
};
use heatbie::potentials::{assemble_cross, assemble_v, assemble_w, assemble_w_star, BlockOperator, CrossKind};
use heatbie::verify::{
    boundary_condition_residual, check_rows, green_identity_residual, mesh_offsets, run_manufactured,
    smooth_random_density, JumpChecker, ManufacturedProblem, SuiteSetup,
};
use heatbie::{BoundaryCurve, BoundaryMesh, Density, Point, SpaceTimeGrid};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn setup() -> SuiteSetup {
    SuiteSetup::new(
        BoundaryCurve::circle(Point::zeros(), 1.0).unwrap(),
        BoundaryCurve::circle(Point::zeros(), 0.4).unwrap(),
        0.5,
    )
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

fn kernels() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for dim in [Dimension::Two, Dimension::Three] {
        for &r in &logspace(1e-3, 10.0, 20) {
            for &h in &logspace(1e-4, 1.0, 20) {
                // A window starting at zero and one ending at one.
                for (a, b) in [(0.0, h), ((1.0 - h).max(0.0), 1.0)] {
                    let slab = TimeSlab::new(r, a, b).unwrap();
                    worst = worst.max(rel(
                        time_integrated_s(&slab, dim),
                        kernel_moment_oracle(dim, 0, r, a, b),
                    ));
                    let grad = 0.5 * kernel_moment_oracle(dim, 1, r, a, b);
                    worst = worst.max(rel(time_integrated_grad_s(&slab, dim), grad));
                    count += 2;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "{count} values, worst relative error {worst:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn jumps() -> Outcome {
    let start = Instant::now();
    let curve = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
    let grid = SpaceTimeGrid::new(0.5, 64, 128).unwrap();
    let checker = JumpChecker::new(&curve, &grid).unwrap();
    let (offsets, rows) = (mesh_offsets(&checker.mesh), check_rows(grid.steps));
    let mut worst = [0.0f64; 2];
    for seed in 0..5 {
        let density = smooth_random_density(&grid, seed);
        worst[0] = worst[0].max(checker.single(&density, offsets, &rows).unwrap().residual);
        worst[1] = worst[1].max(checker.double(&density, offsets, &rows).unwrap().residual);
    }
    let mut levels = Vec::new();
    for (nodes, steps) in [(64, 16), (128, 32), (256, 64)] {
        let grid = SpaceTimeGrid::new(0.5, steps, nodes).unwrap();
        let checker = JumpChecker::new(&curve, &grid).unwrap();
        let (offsets, rows) = (mesh_offsets(&checker.mesh), check_rows(grid.steps));
        let density = smooth_random_density(&grid, 0);
        let s = checker.single(&density, offsets, &rows).unwrap().residual;
        let d = checker.double(&density, offsets, &rows).unwrap().residual;
        levels.push([s, d]);
    }
    let order = |k: usize| (levels[1][k] / levels[2][k]).log2();
    let orders = [order(0), order(1)];
    let elapsed = start.elapsed();
    ensure(
        worst[0] <= 5e-2 && worst[1] <= 5e-2 && orders.iter().all(|&p| p >= 0.9) && elapsed < Duration::from_secs(120),
        format!(
            "residual single {:.2e} double {:.2e}, orders {:.2}/{:.2}, {:.1}s",
            worst[0],
            worst[1],
            orders[0],
            orders[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn green() -> Outcome {
    let start = Instant::now();
    let s = setup();
    let residual = |nodes, steps| {
        let grid = SpaceTimeGrid::new(0.5, steps, nodes).unwrap();
        green_identity_residual(&s.outer, &grid, &s.outer_source(), &s.interior_probes())
            .unwrap()
            .residual
    };
    let (coarse, fine) = (residual(64, 32), residual(128, 64));
    ensure(
        fine <= 1e-2 && fine < coarse && start.elapsed() < Duration::from_secs(60),
        format!("residual {fine:.2e} at (128,64), {coarse:.2e} at (64,32)"),
    )
}

fn linear_bie() -> Outcome {
    let start = Instant::now();
    let s = setup();
    let mut worst = 0.0f64;
    for p in [
        ManufacturedProblem::ExtDirichlet,
        ManufacturedProblem::ExtNeumann,
        ManufacturedProblem::IntDirichlet,
        ManufacturedProblem::IntNeumann,
    ] {
        worst = worst.max(run_manufactured(&s, p, 128, 64).unwrap().error_sup);
    }
    let grid = SpaceTimeGrid::new(0.5, 64, 128).unwrap();
    let zero = EquationKind::SECOND_KIND
        .iter()
        .map(|&k| {
            solve_second_kind(k, &s.outer, &grid, &Density::zeros(64, 128))
                .unwrap()
                .density
                .sup_norm()
        })
        .fold(0.0, f64::max);
    ensure(
        worst <= 1e-2 && zero <= 1e-12 && start.elapsed() < Duration::from_secs(120),
        format!("worst probe error {worst:.2e}, zero-data density {zero:.1e}"),
    )
}

fn j_beta() -> Outcome {
    let s = setup();
    let grid = SpaceTimeGrid::new(0.5, 32, 64).unwrap();
    let beta = Density::sample(&grid, 64, |t, j| 1.0 + t + 0.2 * (j as f64 * 0.1).sin());
    let j = assemble_j_beta(&s.outer, &s.inner, &grid, &beta).unwrap();
    let mut round_trip = 0.0f64;
    for seed in 0..3 {
        let mu = smooth_random_density(&grid, 10 + seed);
        let eta = smooth_random_density(&grid, 20 + seed);
        let (r1, r2) = j.apply(&mu, &eta);
        let (m2, e2) = j.solve(&r1, &r2).unwrap();
        round_trip = round_trip
            .max(m2.difference(&mu).sup_norm())
            .max(e2.difference(&eta).sup_norm());
    }
    let zero = Density::zeros(32, 64);
    let (zm, ze) = j.solve(&zero, &zero).unwrap();
    let zero_norm = zm.sup_norm().max(ze.sup_norm());

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut sigma = f64::INFINITY;
    let mut shipped = 0;
    let mut entries: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
    {
        let cfg = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let grid = cfg.space_time_grid().unwrap();
        let j = assemble_j_beta(
            &cfg.outer().unwrap(),
            &cfg.inner().unwrap(),
            &grid,
            &cfg.beta(&grid).unwrap(),
        )
        .unwrap();
        sigma = sigma.min(j.smallest_singular_value());
        shipped += 1;
    }
    ensure(
        round_trip <= 1e-9 && zero_norm <= 1e-12 && shipped > 0 && sigma > 1e-6,
        format!("round trip {round_trip:.1e}, zero rhs {zero_norm:.1e}, min sigma {sigma:.3e} over {shipped} configs"),
    )
}

fn affine() -> Outcome {
    let s = setup();
    let grid = SpaceTimeGrid::new(0.5, 64, 128).unwrap();
    let system = MixedSystem::new(s.mixed_problem(&grid, Family::Linear).unwrap()).unwrap();
    let out = solve_nonlinear(
        &system,
        &FixedPointConfig {
            damping: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let run = run_manufactured(&s, ManufacturedProblem::LinearMixed, 128, 64).unwrap();
    ensure(
        out.converged && out.iterations == 1 && run.error_sup <= 1e-2,
        format!("{} iteration(s), probe error {:.2e}", out.iterations, run.error_sup),
    )
}

fn nonlinear() -> Outcome {
    let start = Instant::now();
    let s = setup();
    let solve = |nodes, steps| {
        let grid = SpaceTimeGrid::new(0.5, steps, nodes).unwrap();
        let system =
            MixedSystem::new(s.mixed_problem(&grid, Family::SinPerturbed { amplitude: 0.1 }).unwrap()).unwrap();
        let out = solve_nonlinear(&system, &FixedPointConfig::default()).unwrap();
        let bc = boundary_condition_residual(&system, &out.mu, &out.eta).unwrap();
        (out, bc.neumann.max(bc.robin))
    };
    let (_, coarse) = solve(64, 32);
    let (out, fine) = solve(128, 64);
    ensure(
        out.converged
            && out.residual <= 1e-8
            && out.iterations <= 50
            && fine <= 1e-1
            && fine < coarse
            && start.elapsed() < Duration::from_secs(300),
        format!(
            "{} iterations, residual {:.1e}, boundary residual {fine:.2e} (coarse {coarse:.2e})",
            out.iterations, out.residual
        ),
    )
}

fn growth() -> Outcome {
    let grid = SpaceTimeGrid::new(0.5, 8, 32).unwrap();
    let beta = Density::sample(&grid, 32, |_, _| 1.0);
    let sweep = [1.0, 10.0, 100.0];
    let report = |family| {
        let g = RobinNonlinearity::new(family, beta.clone(), &grid, None).unwrap();
        check_growth_condition(&g, &sweep).unwrap()
    };
    let linear = report(Family::Linear);
    let sin = report(Family::SinPerturbed { amplitude: 1.0 });
    let quad = report(Family::Quadratic { c: 1.0 });
    ensure(
        linear.pass && sin.pass && !quad.pass && quad.slope > 1.0,
        format!(
            "slopes linear {:.2}, sin {:.2}, quadratic {:.2}",
            linear.slope, sin.slope, quad.slope
        ),
    )
}

fn all_operators(grid: &SpaceTimeGrid) -> Vec<BlockOperator> {
    let s = setup();
    let outer = BoundaryMesh::new(&s.outer, grid.nodes).unwrap();
    let inner = BoundaryMesh::new(&s.inner, grid.nodes).unwrap();
    vec![
        assemble_v(&outer, grid).unwrap(),
        assemble_w(&outer, grid).unwrap(),
        assemble_w_star(&outer, grid).unwrap(),
        assemble_v(&inner, grid).unwrap(),
        assemble_w_star(&inner, grid).unwrap(),
        assemble_cross(&outer, &inner, grid, CrossKind::Value).unwrap(),
        assemble_cross(&outer, &inner, grid, CrossKind::NormalDerivative).unwrap(),
        assemble_cross(&inner, &outer, grid, CrossKind::Value).unwrap(),
        assemble_cross(&inner, &outer, grid, CrossKind::NormalDerivative).unwrap(),
    ]
}

fn invariants() -> Outcome {
    let grid = SpaceTimeGrid::new(0.5, 12, 32).unwrap();
    let ops = all_operators(&grid);
    let mut violations = 0;
    for op in &ops {
        let d = smooth_random_density(&grid, 3);
        let full = op.apply(&d);
        violations += full.row(0).iter().filter(|&&v| v != 0.0).count();
        for cut in 0..grid.steps {
            let trunc = op.apply(&d.truncated_after(cut));
            violations += (0..=cut).filter(|&m| full.row(m) != trunc.row(m)).count();
        }
    }
    let again = all_operators(&grid);
    let same_ops = ops == again;
    let s = setup();
    let a = run_manufactured(&s, ManufacturedProblem::NonlinearMixed, 32, 16).unwrap();
    let b = run_manufactured(&s, ManufacturedProblem::NonlinearMixed, 32, 16).unwrap();
    let same_runs = a.error_sup.to_bits() == b.error_sup.to_bits() && a.iterations == b.iterations;
    let same_density = smooth_random_density(&grid, 42) == smooth_random_density(&grid, 42);
    ensure(
        violations == 0 && same_ops && same_runs && same_density,
        format!(
            "{} operators, {violations} causality violations, repeatable operators {same_ops}, runs {same_runs}, densities {same_density}",
            ops.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("kernel closed forms", kernels),
        ("jump relations", jumps),
        ("Green identity", green),
        ("linear BIE manufactured solutions", linear_bie),
        ("J_beta round trip", j_beta),
        ("affine G", affine),
        ("nonlinear mixed problem", nonlinear),
        ("growth condition", growth),
        ("structural invariants", invariants),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
