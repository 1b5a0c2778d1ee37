//! Subcommand drivers behind the `heatbie` binary.
//!
//! Exit codes: 0 success, 1 error (including failed checks), 2 the fixed-point
//! iteration did not converge (the best iterate is still written).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use heatbie::config::{parse_config, DumpFormat, OutputFormat, RunConfig};
use heatbie::dump::{encode_binary, write_csv as write_dump_csv};
use heatbie::kernel::{
    eval_s, grad_s, kernel_moment_at_origin, slab_gradient_factor, slab_value, Dimension, KernelQuery,
};
use heatbie::manufactured::PointSource;
use heatbie::nonlinear::{check_growth_condition, solve_nonlinear, MixedProblem, MixedSystem, RobinNonlinearity};
use heatbie::potentials::{BlockOperator, Probe};
use heatbie::report::{run_id, JsonLines};
use heatbie::verify::{
    boundary_condition_residual, check_rows, convergence_study, green_identity_residual, interior_probes,
    manufactured_suite, mesh_offsets, smooth_random_density, JumpChecker, ManufacturedProblem, SuiteSetup,
};
use heatbie::{BoundaryMesh, Density};

/// Sup-norm sweep used by the growth-condition check before a solve.
pub const GROWTH_SWEEP: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Parser)]
#[command(
    name = "heatbie",
    version,
    about = "Space-time boundary integral solver for the heat equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, env = "HEATBIE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, env = "HEATBIE_OUT")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HEATBIE_THREADS")]
    pub threads: Option<usize>,

    /// Fail when the nonlinearity violates the sublinear growth condition.
    #[arg(long, global = true, env = "HEATBIE_STRICT_GROWTH")]
    pub strict_growth: bool,

    /// Seed for random-density batteries; overrides `verify.seed`.
    #[arg(long, global = true, env = "HEATBIE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the nonlinear mixed problem.
    Solve,
    /// Run the jump, Green identity and manufactured-solution checks.
    Verify,
    /// Convergence study over the configured levels.
    Converge,
    /// Tabulate the heat kernel and its time integrals.
    Kernels,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Converge => "converge",
            Command::Kernels => "kernels",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    ChecksFailed,
    NotConverged,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::ChecksFailed => 1,
            Status::NotConverged => 2,
        }
    }
}

struct RunContext {
    cfg: RunConfig,
    out: PathBuf,
    run_id: String,
    strict_growth: bool,
}

pub fn run(cli: &Cli) -> Result<Status> {
    if let Some(k) = cli.threads {
        if k == 0 {
            bail!("--threads must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let path = cli
        .config
        .as_ref()
        .context("no configuration given (use --config or HEATBIE_CONFIG)")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.verify.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let id = run_id(&[
        cli.command.name().as_bytes(),
        text.as_bytes(),
        &cfg.verify.seed.to_le_bytes(),
        &[cli.strict_growth as u8],
    ]);
    let ctx = RunContext {
        cfg,
        out,
        run_id: id,
        strict_growth: cli.strict_growth,
    };
    match cli.command {
        Command::Solve => solve(&ctx),
        Command::Verify => verify(&ctx),
        Command::Converge => converge(&ctx),
        Command::Kernels => kernels(&ctx),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_file(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn density_rows(d: &Density, grid: &heatbie::SpaceTimeGrid) -> Vec<Vec<String>> {
    let params = grid.params();
    let mut rows = Vec::with_capacity(d.steps() * d.nodes());
    for m in 1..=d.steps() {
        for (j, theta) in params.iter().enumerate() {
            rows.push(vec![num(grid.time(m)), num(*theta), num(d.get(m, j))]);
        }
    }
    rows
}

fn suite_setup(cfg: &RunConfig) -> Result<SuiteSetup> {
    let mut setup = SuiteSetup::new(cfg.outer()?, cfg.inner()?, cfg.grid.horizon);
    setup.fixed_point = cfg.solver;
    Ok(setup)
}

/// The mixed problem described by the config and, for manufactured runs, its exact solution.
pub fn build_problem(cfg: &RunConfig) -> Result<(MixedProblem, Option<PointSource>)> {
    let grid = cfg.space_time_grid()?;
    let outer = cfg.outer()?;
    let inner = cfg.inner()?;
    let family = cfg.data.nonlinearity.family()?;
    let beta = cfg.beta(&grid)?;
    let (neumann, robin, exact) = if cfg.is_manufactured() {
        let src = suite_setup(cfg)?.inner_source();
        let outer_mesh = BoundaryMesh::new(&outer, grid.nodes)?;
        let inner_mesh = BoundaryMesh::new(&inner, grid.nodes)?;
        let robin = RobinNonlinearity::manufactured(
            family,
            beta,
            &grid,
            &src.trace(&inner_mesh, &grid),
            &src.normal_trace(&inner_mesh, &grid),
            cfg.data.growth,
        )?;
        (src.normal_trace(&outer_mesh, &grid), robin, Some(src))
    } else {
        let robin = RobinNonlinearity::new(family, beta, &grid, cfg.data.growth)?;
        (cfg.neumann(&grid)?, robin, None)
    };
    Ok((
        MixedProblem {
            outer,
            inner,
            grid,
            neumann,
            robin,
        },
        exact,
    ))
}

#[derive(Serialize)]
struct ProbeRow {
    t: f64,
    x: f64,
    y: f64,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    run_id: &'a str,
    converged: bool,
    iterations: usize,
    residual: f64,
    nodes: usize,
    steps: usize,
    nonlinearity: &'static str,
    manufactured: bool,
    smallest_singular_value: f64,
    growth: &'a heatbie::nonlinear::GrowthReport,
    neumann_residual: f64,
    robin_residual: f64,
    probes: &'a [ProbeRow],
}

fn solve(ctx: &RunContext) -> Result<Status> {
    let cfg = &ctx.cfg;
    let (problem, exact) = build_problem(cfg)?;
    let growth = check_growth_condition(&problem.robin, &GROWTH_SWEEP)?;
    if !growth.pass {
        if ctx.strict_growth {
            return Err(heatbie::Error::GrowthViolation { slope: growth.slope }.into());
        }
        log::warn!(
            "growth condition fails (fitted exponent {:.3}); continuing without --strict-growth",
            growth.slope
        );
    }
    let grid = problem.grid;
    let system = MixedSystem::new(problem)?;
    let outcome = solve_nonlinear(&system, &cfg.solver)?;

    let mut log = JsonLines::new(ctx.run_id.clone(), fs::File::create(ctx.out.join("iterations.jsonl"))?);
    for rec in &outcome.log {
        log.emit("iteration", rec)?;
    }
    log.emit(
        "outcome",
        &serde_json::json!({
            "converged": outcome.converged,
            "iterations": outcome.iterations,
            "residual": outcome.residual,
        }),
    )?;
    log.into_inner().flush()?;

    let mut probes: Vec<Probe> = cfg.probes();
    if probes.is_empty() {
        probes = suite_setup(cfg)?.annulus_probes()?;
    }
    let values = system.eval_solution(&outcome.mu, &outcome.eta, &probes)?;
    let rows: Vec<ProbeRow> = probes
        .iter()
        .zip(&values)
        .map(|(p, &value)| {
            let exact = exact.map(|s| s.value(p.t, &p.x));
            ProbeRow {
                t: p.t,
                x: p.x.x,
                y: p.x.y,
                value,
                exact,
                relative_error: exact.map(|e| (value - e).abs() / e.abs().max(f64::MIN_POSITIVE)),
            }
        })
        .collect();
    let bc = boundary_condition_residual(&system, &outcome.mu, &outcome.eta)?;

    if cfg.output.formats.contains(&OutputFormat::Csv) {
        csv_file(
            &ctx.out.join("mu.csv"),
            &["t", "theta", "value"],
            density_rows(&outcome.mu, &grid),
        )?;
        csv_file(
            &ctx.out.join("eta.csv"),
            &["t", "theta", "value"],
            density_rows(&outcome.eta, &grid),
        )?;
        let mut header = vec!["t", "x", "y", "value"];
        if exact.is_some() {
            header.extend(["exact", "relative_error"]);
        }
        csv_file(
            &ctx.out.join("probes.csv"),
            &header,
            rows.iter().map(|r| {
                let mut v = vec![num(r.t), num(r.x), num(r.y), num(r.value)];
                if let (Some(e), Some(err)) = (r.exact, r.relative_error) {
                    v.extend([num(e), num(err)]);
                }
                v
            }),
        )?;
    }
    if cfg.output.formats.contains(&OutputFormat::Json) {
        json_file(
            &ctx.out.join("summary.json"),
            &SolveSummary {
                run_id: &ctx.run_id,
                converged: outcome.converged,
                iterations: outcome.iterations,
                residual: outcome.residual,
                nodes: grid.nodes,
                steps: grid.steps,
                nonlinearity: system.problem.robin.family().name(),
                manufactured: exact.is_some(),
                smallest_singular_value: system.j_beta.smallest_singular_value(),
                growth: &growth,
                neumann_residual: bc.neumann,
                robin_residual: bc.robin,
                probes: &rows,
            },
        )?;
    }
    dump_operators(ctx, &system)?;

    println!(
        "{} after {} iterations, residual {:.3e}",
        if outcome.converged {
            "converged"
        } else {
            "NOT converged"
        },
        outcome.iterations,
        outcome.residual
    );
    if let Some(worst) = rows.iter().filter_map(|r| r.relative_error).reduce(f64::max) {
        println!("largest relative probe error {worst:.3e}");
    }
    Ok(if outcome.converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

fn dump_operators(ctx: &RunContext, system: &MixedSystem) -> Result<()> {
    let format = ctx.cfg.output.dump_operators;
    if format == DumpFormat::None {
        return Ok(());
    }
    let dir = ctx.out.join("operators");
    fs::create_dir_all(&dir)?;
    let j = &system.j_beta;
    let ops: [(&str, &BlockOperator); 6] = [
        ("w_star_outer", &j.w_star_outer),
        ("normal_inner_to_outer", &j.normal_inner_to_outer),
        ("normal_outer_to_inner", &j.normal_outer_to_inner),
        ("w_star_inner", &j.w_star_inner),
        ("value_outer_to_inner", &j.value_outer_to_inner),
        ("v_inner", &j.v_inner),
    ];
    for (name, op) in ops {
        match format {
            DumpFormat::Binary => fs::write(dir.join(format!("{name}.hbop")), encode_binary(op))?,
            DumpFormat::Csv => write_dump_csv(op, fs::File::create(dir.join(format!("{name}.csv")))?)?,
            DumpFormat::None => {}
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckRow {
    check: String,
    index: usize,
    residual: f64,
    tolerance: f64,
    pass: bool,
}

fn verify(ctx: &RunContext) -> Result<Status> {
    let cfg = &ctx.cfg;
    let v = &cfg.verify;
    let grid = cfg.space_time_grid()?;
    let outer = cfg.outer()?;
    let checker = JumpChecker::new(&outer, &grid)?;
    let offsets = mesh_offsets(&checker.mesh);
    let rows = check_rows(grid.steps);
    let mut checks = Vec::new();
    let mut log = JsonLines::new(ctx.run_id.clone(), fs::File::create(ctx.out.join("verify.jsonl"))?);

    for k in 0..v.densities {
        let density = smooth_random_density(&grid, v.seed.wrapping_add(k as u64));
        for (single, tol) in [(true, v.single_tolerance), (false, v.double_tolerance)] {
            let report = if single {
                checker.single(&density, offsets, &rows)?
            } else {
                checker.double(&density, offsets, &rows)?
            };
            if let Some(w) = &report.warning {
                log::warn!("{w}");
            }
            log.emit("jump", &report)?;
            checks.push(CheckRow {
                check: format!("jump-{}", report.layer),
                index: k,
                residual: report.residual,
                tolerance: tol,
                pass: report.residual <= tol,
            });
        }
    }

    let setup = suite_setup(cfg)?;
    let green = green_identity_residual(
        &outer,
        &grid,
        &setup.outer_source(),
        &interior_probes(&outer, grid.horizon),
    )?;
    log.emit("green", &green)?;
    checks.push(CheckRow {
        check: "green-identity".into(),
        index: 0,
        residual: green.residual,
        tolerance: v.green_tolerance,
        pass: green.residual <= v.green_tolerance && green.probes_used > 0,
    });

    if v.manufactured_suite {
        for (k, run) in manufactured_suite(&setup, grid.nodes, grid.steps)?
            .into_iter()
            .enumerate()
        {
            log.emit("manufactured", &run)?;
            checks.push(CheckRow {
                check: run.problem.to_string(),
                index: k,
                residual: run.error_sup,
                tolerance: v.manufactured_tolerance,
                pass: run.converged && run.error_sup <= v.manufactured_tolerance,
            });
        }
    }
    log.into_inner().flush()?;

    csv_file(
        &ctx.out.join("verify.csv"),
        &["check", "index", "residual", "tolerance", "pass"],
        checks.iter().map(|c| {
            vec![
                c.check.clone(),
                c.index.to_string(),
                num(c.residual),
                num(c.tolerance),
                c.pass.to_string(),
            ]
        }),
    )?;
    for c in &checks {
        println!(
            "{:<18} {:>2}  {:.3e} <= {:.1e}  {}",
            c.check,
            c.index,
            c.residual,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if checks.iter().all(|c| c.pass) {
        Status::Success
    } else {
        Status::ChecksFailed
    })
}

fn converge(ctx: &RunContext) -> Result<Status> {
    let cfg = &ctx.cfg;
    let problem = ManufacturedProblem::from_name(&cfg.converge.problem).context("unknown problem")?;
    let levels: Vec<(usize, usize)> = cfg.converge.levels.iter().map(|l| (l[0], l[1])).collect();
    let study = convergence_study(&suite_setup(cfg)?, problem, &levels)?;
    let csv = study.to_csv();
    fs::write(ctx.out.join("converge.csv"), &csv)?;
    print!("{csv}");
    let finest = study.orders().last().copied().unwrap_or(f64::NAN);
    if !study.monotone {
        log::warn!("error sequence is not monotone");
    }
    Ok(if study.monotone && finest >= cfg.converge.min_order {
        Status::Success
    } else {
        Status::ChecksFailed
    })
}

/// One row of the kernel table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelRow {
    pub n: usize,
    pub t: f64,
    pub r: f64,
    pub s: f64,
    pub grad_norm: f64,
    /// `∫ S_n` over `[start_fraction · t, t]`.
    pub integrated_s: f64,
    /// `g` with `∫ ∇S_n = -x g` over the same window.
    pub integrated_grad_factor: f64,
}

pub const KERNEL_HEADER: [&str; 7] = [
    "n",
    "t",
    "r",
    "s",
    "grad_s_norm",
    "integrated_s",
    "integrated_grad_factor",
];

pub fn kernel_table(cfg: &RunConfig) -> Result<Vec<KernelRow>> {
    let k = &cfg.kernels;
    let mut rows = Vec::new();
    for &n in &k.dimensions {
        let dim = Dimension::from_n(n)?;
        for &t in &k.times {
            for &r in &k.radii {
                let mut x = vec![0.0; n];
                x[0] = r;
                let q = KernelQuery::new(dim, t, &x)?;
                let grad_norm = grad_s(&q).iter().map(|g| g * g).sum::<f64>().sqrt();
                let a = k.start_fraction * t;
                let (integrated_s, integrated_grad_factor) = if r > 0.0 {
                    (slab_value(dim, r, a, t), slab_gradient_factor(dim, r, a, t))
                } else {
                    (
                        kernel_moment_at_origin(dim, 0, a, t),
                        0.5 * kernel_moment_at_origin(dim, 1, a, t),
                    )
                };
                rows.push(KernelRow {
                    n,
                    t,
                    r,
                    s: eval_s(&q),
                    grad_norm,
                    integrated_s,
                    integrated_grad_factor,
                });
            }
        }
    }
    Ok(rows)
}

fn kernels(ctx: &RunContext) -> Result<Status> {
    let rows: Vec<Vec<String>> = kernel_table(&ctx.cfg)?
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.t),
                num(r.r),
                num(r.s),
                num(r.grad_norm),
                num(r.integrated_s),
                num(r.integrated_grad_factor),
            ]
        })
        .collect();
    let path = ctx.out.join("kernels.csv");
    csv_file(&path, &KERNEL_HEADER, rows)?;
    print!("{}", fs::read_to_string(&path)?);
    Ok(Status::Success)
}
