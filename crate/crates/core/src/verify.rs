//! Oracle suite: jump relations, the third Green identity, manufactured
//! solutions, boundary-condition residuals and convergence studies.
//!
//! The oracles only evaluate potentials at off-boundary points and never
//! touch the assembled boundary operators they are compared against.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bie::{solve_second_kind, EquationKind};
use crate::density::Density;
use crate::error::{Error, Result};
use crate::geometry::{validate_annulus, BoundaryCurve, BoundaryMesh, Point, SpaceTimeGrid};
use crate::manufactured::PointSource;
use crate::nonlinear::{solve_nonlinear, Family, FixedPointConfig, MixedProblem, MixedSystem, RobinNonlinearity};
use crate::potentials::{assemble_w, assemble_w_star, BlockOperator, Layer, LayerPotential, Probe};

/// Smooth density with random low-order Fourier content in `θ`, vanishing linearly at `t = 0`.
pub fn smooth_random_density(grid: &SpaceTimeGrid, seed: u64) -> Density {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = 5;
    let coef: Vec<[f64; 3]> = (0..modes)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let params = grid.params();
    let horizon = grid.horizon;
    Density::sample(grid, grid.nodes, |t, j| {
        let s = t / horizon;
        coef.iter()
            .enumerate()
            .map(|(k, c)| {
                let kf = k as f64;
                let angular = c[0] * (kf * params[j]).cos() + c[1] * (kf * params[j]).sin();
                angular * s * (1.0 + 0.5 * c[2] * s) / (1.0 + kf * kf)
            })
            .sum()
    })
}

/// Lattice rows used by the off-surface checks: quarters of the horizon.
pub fn check_rows(steps: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = [steps / 4, steps / 2, 3 * steps / 4, steps]
        .into_iter()
        .filter(|&m| m >= 1)
        .collect();
    rows.dedup();
    rows
}

/// Linear extrapolation to zero offset from samples at `d1 > d2`.
fn extrapolate(d1: f64, f1: f64, d2: f64, f2: f64) -> f64 {
    (d1 * f2 - d2 * f1) / (d1 - d2)
}

fn check_offsets(mesh: &BoundaryMesh, offsets: [f64; 2]) -> Result<Option<String>> {
    let [d1, d2] = offsets;
    if !(d1.is_finite() && d2 > 0.0 && d1 > d2) {
        return Err(Error::InvalidInput(format!(
            "offsets must decrease toward zero, got {offsets:?}"
        )));
    }
    let spacing = mesh.max_spacing();
    Ok((d2 < 0.25 * spacing).then(|| {
        format!(
            "offset {d2:.3e} is below a quarter of the mesh spacing {spacing:.3e}; extrapolation is quadrature-limited"
        )
    }))
}

/// Offsets `(Δs, Δs/2)` tied to the mesh spacing.
pub fn mesh_offsets(mesh: &BoundaryMesh) -> [f64; 2] {
    let d = mesh.max_spacing();
    [d, 0.5 * d]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub layer: &'static str,
    pub nodes: usize,
    pub steps: usize,
    pub offsets: [f64; 2],
    pub rows: Vec<usize>,
    /// Sup deviation of the interior limit, relative to `‖μ‖_∞`.
    pub interior: f64,
    pub exterior: f64,
    pub residual: f64,
    /// Double layer only: `‖∂ν w⁺ − ∂ν w⁻‖_∞ / ‖∂ν w‖_∞`.
    pub normal_continuity: Option<f64>,
    pub warning: Option<String>,
}

enum Quantity {
    Value,
    NormalDerivative,
}

/// One-sided limits of a layer potential at the lattice rows `rows`, for
/// both sides, by extrapolation along the normal.
fn one_sided_limits(
    mesh: &BoundaryMesh,
    grid: &SpaceTimeGrid,
    density: &Density,
    layer: Layer,
    quantity: Quantity,
    offsets: [f64; 2],
    rows: &[usize],
) -> Result<[Vec<Vec<f64>>; 2]> {
    let n = mesh.len();
    let mut probes = Vec::with_capacity(rows.len() * n * 4);
    for &m in rows {
        let t = grid.time(m);
        for j in 0..n {
            for side in [-1.0, 1.0] {
                for d in offsets {
                    probes.push(Probe::new(t, mesh.points[j] + mesh.normals[j] * (side * d)));
                }
            }
        }
    }
    let pot = LayerPotential::new(mesh, grid, density, layer)?;
    let samples: Vec<f64> = match quantity {
        Quantity::Value => pot.values(&probes)?,
        Quantity::NormalDerivative => {
            let grads = pot.gradients(&probes)?;
            grads
                .iter()
                .enumerate()
                .map(|(i, g)| g.dot(&mesh.normals[(i / 4) % n]))
                .collect()
        }
    };
    let [d1, d2] = offsets;
    let mut interior = Vec::with_capacity(rows.len());
    let mut exterior = Vec::with_capacity(rows.len());
    for (r, _) in rows.iter().enumerate() {
        let mut inn = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let base = (r * n + j) * 4;
            let s = &samples[base..base + 4];
            inn.push(extrapolate(d1, s[0], d2, s[1]));
            out.push(extrapolate(d1, s[2], d2, s[3]));
        }
        interior.push(inn);
        exterior.push(out);
    }
    Ok([interior, exterior])
}

fn sup_deviation(limits: &[Vec<f64>], rows: &[usize], target: impl Fn(usize, usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (r, &m) in rows.iter().enumerate() {
        for (j, v) in limits[r].iter().enumerate() {
            worst = worst.max((v - target(m, j)).abs());
        }
    }
    worst
}

fn relative_to(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

/// Off-surface jump-relation checks on one boundary with its operators assembled once.
pub struct JumpChecker {
    pub mesh: BoundaryMesh,
    pub grid: SpaceTimeGrid,
    w: BlockOperator,
    w_star: BlockOperator,
}

impl JumpChecker {
    pub fn new(curve: &BoundaryCurve, grid: &SpaceTimeGrid) -> Result<Self> {
        let mesh = BoundaryMesh::new(curve, grid.nodes)?;
        let w = assemble_w(&mesh, grid)?;
        let w_star = assemble_w_star(&mesh, grid)?;
        Ok(Self {
            mesh,
            grid: *grid,
            w,
            w_star,
        })
    }

    fn check_density(&self, density: &Density) -> Result<()> {
        if density.steps() != self.grid.steps || density.nodes() != self.mesh.len() {
            return Err(Error::InvalidInput("density does not match the lattice".into()));
        }
        Ok(())
    }

    /// `∂ν v^± = ±½μ + W*μ`.
    pub fn single(&self, density: &Density, offsets: [f64; 2], rows: &[usize]) -> Result<JumpReport> {
        self.check_density(density)?;
        let warning = check_offsets(&self.mesh, offsets)?;
        let op = self.w_star.apply(density);
        let [inn, out] = one_sided_limits(
            &self.mesh,
            &self.grid,
            density,
            Layer::Single,
            Quantity::NormalDerivative,
            offsets,
            rows,
        )?;
        let scale = density.sup_norm();
        let interior = relative_to(
            sup_deviation(&inn, rows, |m, j| 0.5 * density.get(m, j) + op.get(m, j)),
            scale,
        );
        let exterior = relative_to(
            sup_deviation(&out, rows, |m, j| -0.5 * density.get(m, j) + op.get(m, j)),
            scale,
        );
        Ok(JumpReport {
            layer: "single",
            nodes: self.mesh.len(),
            steps: self.grid.steps,
            offsets,
            rows: rows.to_vec(),
            interior,
            exterior,
            residual: interior.max(exterior),
            normal_continuity: None,
            warning,
        })
    }

    /// `w^± = ∓½μ + Wμ`, plus continuity of `∂ν w` across the boundary.
    pub fn double(&self, density: &Density, offsets: [f64; 2], rows: &[usize]) -> Result<JumpReport> {
        self.check_density(density)?;
        let warning = check_offsets(&self.mesh, offsets)?;
        let op = self.w.apply(density);
        let [inn, out] = one_sided_limits(
            &self.mesh,
            &self.grid,
            density,
            Layer::Double,
            Quantity::Value,
            offsets,
            rows,
        )?;
        let scale = density.sup_norm();
        let interior = relative_to(
            sup_deviation(&inn, rows, |m, j| -0.5 * density.get(m, j) + op.get(m, j)),
            scale,
        );
        let exterior = relative_to(
            sup_deviation(&out, rows, |m, j| 0.5 * density.get(m, j) + op.get(m, j)),
            scale,
        );
        let [dn_in, dn_out] = one_sided_limits(
            &self.mesh,
            &self.grid,
            density,
            Layer::Double,
            Quantity::NormalDerivative,
            offsets,
            rows,
        )?;
        let mut gap = 0.0f64;
        let mut size = 0.0f64;
        for (a, b) in dn_in.iter().flatten().zip(dn_out.iter().flatten()) {
            gap = gap.max((a - b).abs());
            size = size.max(a.abs()).max(b.abs());
        }
        Ok(JumpReport {
            layer: "double",
            nodes: self.mesh.len(),
            steps: self.grid.steps,
            offsets,
            rows: rows.to_vec(),
            interior,
            exterior,
            residual: interior.max(exterior),
            normal_continuity: Some(relative_to(gap, size)),
            warning,
        })
    }
}

pub fn jump_residual_single(
    curve: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    density: &Density,
    offsets: [f64; 2],
) -> Result<JumpReport> {
    JumpChecker::new(curve, grid)?.single(density, offsets, &check_rows(grid.steps))
}

pub fn jump_residual_double(
    curve: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    density: &Density,
    offsets: [f64; 2],
) -> Result<JumpReport> {
    JumpChecker::new(curve, grid)?.double(density, offsets, &check_rows(grid.steps))
}

/// A closed-form solution of the heat equation.
pub trait CaloricField: Sync {
    fn value(&self, t: f64, x: &Point) -> f64;
    fn gradient(&self, t: f64, x: &Point) -> Point;
}

impl CaloricField for PointSource {
    fn value(&self, t: f64, x: &Point) -> f64 {
        PointSource::value(self, t, x)
    }
    fn gradient(&self, t: f64, x: &Point) -> Point {
        PointSource::gradient(self, t, x)
    }
}

pub struct ZeroField;

impl CaloricField for ZeroField {
    fn value(&self, _: f64, _: &Point) -> f64 {
        0.0
    }
    fn gradient(&self, _: f64, _: &Point) -> Point {
        Point::zeros()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenReport {
    pub nodes: usize,
    pub steps: usize,
    /// `sup |v[∂νu] − w[u] − u| / sup |u|` over the used probes.
    pub residual: f64,
    pub absolute: f64,
    pub probes_used: usize,
    /// Probes outside the region or within one mesh width of the boundary.
    pub probes_excluded: usize,
}

/// Reconstructs a caloric field inside `curve` from its boundary traces,
/// `u = v[∂νu] − w[u]`, and compares with the field itself.
pub fn green_identity_residual(
    curve: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    sample: &dyn CaloricField,
    probes: &[Probe],
) -> Result<GreenReport> {
    let mesh = BoundaryMesh::new(curve, grid.nodes)?;
    let collar = mesh.max_spacing();
    let used: Vec<Probe> = probes
        .iter()
        .copied()
        .filter(|p| curve.contains(&p.x) && curve.distance_to(&p.x) >= collar)
        .collect();
    let trace = Density::sample(grid, mesh.len(), |t, j| sample.value(t, &mesh.points[j]));
    let flux = Density::sample(grid, mesh.len(), |t, j| {
        sample.gradient(t, &mesh.points[j]).dot(&mesh.normals[j])
    });
    let single = LayerPotential::new(&mesh, grid, &flux, Layer::Single)?.values(&used)?;
    let double = LayerPotential::new(&mesh, grid, &trace, Layer::Double)?.values(&used)?;
    let (mut absolute, mut scale) = (0.0f64, 0.0f64);
    for (i, p) in used.iter().enumerate() {
        let exact = sample.value(p.t, &p.x);
        absolute = absolute.max((single[i] - double[i] - exact).abs());
        scale = scale.max(exact.abs());
    }
    Ok(GreenReport {
        nodes: mesh.len(),
        steps: grid.steps,
        residual: relative_to(absolute, scale),
        absolute,
        probes_used: used.len(),
        probes_excluded: probes.len() - used.len(),
    })
}

/// Interior probe set for a curve: a few radii and angles around its center at two times.
pub fn interior_probes(curve: &BoundaryCurve, horizon: f64) -> Vec<Probe> {
    let c = curve.center();
    let reach = curve.distance_to(&c);
    let mut probes = Vec::new();
    for t in [0.5 * horizon, horizon] {
        probes.push(Probe::new(t, c));
        for rho in [0.3, 0.6] {
            for k in 0..4 {
                let phi = 0.4 + k as f64 * std::f64::consts::FRAC_PI_2;
                probes.push(Probe::new(t, c + Point::new(phi.cos(), phi.sin()) * (rho * reach)));
            }
        }
    }
    probes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManufacturedProblem {
    ExtDirichlet,
    ExtNeumann,
    IntDirichlet,
    IntNeumann,
    LinearMixed,
    NonlinearMixed,
}

impl ManufacturedProblem {
    pub const ALL: [ManufacturedProblem; 6] = [
        ManufacturedProblem::ExtDirichlet,
        ManufacturedProblem::ExtNeumann,
        ManufacturedProblem::IntDirichlet,
        ManufacturedProblem::IntNeumann,
        ManufacturedProblem::LinearMixed,
        ManufacturedProblem::NonlinearMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ManufacturedProblem::ExtDirichlet => "ext-dirichlet",
            ManufacturedProblem::ExtNeumann => "ext-neumann",
            ManufacturedProblem::IntDirichlet => "int-dirichlet",
            ManufacturedProblem::IntNeumann => "int-neumann",
            ManufacturedProblem::LinearMixed => "linear-mixed",
            ManufacturedProblem::NonlinearMixed => "nonlinear-mixed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn equation(self) -> Option<EquationKind> {
        Some(match self {
            ManufacturedProblem::ExtDirichlet => EquationKind::ExteriorDirichlet,
            ManufacturedProblem::ExtNeumann => EquationKind::ExteriorNeumann,
            ManufacturedProblem::IntDirichlet => EquationKind::InteriorDirichlet,
            ManufacturedProblem::IntNeumann => EquationKind::InteriorNeumann,
            _ => return None,
        })
    }
}

/// Annulus and horizon shared by a battery of manufactured runs.
#[derive(Debug, Clone)]
pub struct SuiteSetup {
    pub outer: BoundaryCurve,
    pub inner: BoundaryCurve,
    pub horizon: f64,
    /// Iteration settings for the sin-perturbed run (the affine run always uses θ = 1).
    pub fixed_point: FixedPointConfig,
}

impl SuiteSetup {
    pub fn new(outer: BoundaryCurve, inner: BoundaryCurve, horizon: f64) -> Self {
        Self {
            outer,
            inner,
            horizon,
            fixed_point: FixedPointConfig::default(),
        }
    }

    /// Source inside the cavity.
    pub fn inner_source(&self) -> PointSource {
        PointSource::new(self.inner.center())
    }

    /// Source outside the outer boundary.
    pub fn outer_source(&self) -> PointSource {
        let r = 0.5 * self.outer.extent();
        PointSource::new(self.outer.center() + Point::new(1.6 * r, 0.3 * r))
    }

    pub fn exterior_probes(&self) -> Vec<Probe> {
        let c = self.outer.center();
        let r = 0.5 * self.outer.extent();
        vec![
            Probe::new(0.6 * self.horizon, c + Point::new(2.0 * r, 0.0)),
            Probe::new(self.horizon, c + Point::new(0.0, 3.0 * r)),
        ]
    }

    pub fn interior_probes(&self) -> Vec<Probe> {
        let c = self.outer.center();
        let reach = self.outer.distance_to(&c);
        vec![
            Probe::new(0.6 * self.horizon, c + Point::new(0.3, 0.1) * reach),
            Probe::new(self.horizon, c + Point::new(-0.2, -0.4) * reach),
            Probe::new(self.horizon, c + Point::new(0.6, 0.0) * reach),
        ]
    }

    /// Probes halfway between the boundaries along three rays from the cavity center.
    pub fn annulus_probes(&self) -> Result<Vec<Probe>> {
        let c = self.inner.center();
        let inner_reach = 0.5 * self.inner.extent();
        let outer_reach = self.outer.distance_to(&c);
        let rho = 0.5 * (inner_reach + outer_reach);
        let mut probes = Vec::new();
        for (k, t) in [(0, 0.6), (1, 1.0), (2, 1.0)] {
            let phi = 0.3 + k as f64 * std::f64::consts::TAU / 3.0;
            let x = c + Point::new(phi.cos(), phi.sin()) * rho;
            if !self.outer.contains(&x) || self.inner.contains(&x) {
                return Err(Error::Geometry("could not place probes inside the annulus".into()));
            }
            probes.push(Probe::new(t * self.horizon, x));
        }
        Ok(probes)
    }

    /// The manufactured mixed problem with `G = βu + perturbation + offset`, `β ≡ 1`.
    pub fn mixed_problem(&self, grid: &SpaceTimeGrid, family: Family) -> Result<MixedProblem> {
        validate_annulus(&self.outer, &self.inner)?;
        let src = self.inner_source();
        let outer_mesh = BoundaryMesh::new(&self.outer, grid.nodes)?;
        let inner_mesh = BoundaryMesh::new(&self.inner, grid.nodes)?;
        let beta = Density::sample(grid, grid.nodes, |_, _| 1.0);
        let robin = RobinNonlinearity::manufactured(
            family,
            beta,
            grid,
            &src.trace(&inner_mesh, grid),
            &src.normal_trace(&inner_mesh, grid),
            None,
        )?;
        Ok(MixedProblem {
            outer: self.outer.clone(),
            inner: self.inner.clone(),
            grid: *grid,
            neumann: src.normal_trace(&outer_mesh, grid),
            robin,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub problem: &'static str,
    pub nodes: usize,
    pub steps: usize,
    /// Largest relative probe error.
    pub error_sup: f64,
    /// `‖u − u*‖₂ / ‖u*‖₂` over the probes.
    pub error_l2: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub wall_seconds: f64,
}

fn errors(computed: &[f64], exact: &[f64]) -> (f64, f64) {
    let sup = crate::manufactured::max_relative_error(computed, exact);
    let num: f64 = computed.iter().zip(exact).map(|(c, e)| (c - e).powi(2)).sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    (sup, relative_to(num.sqrt(), den.sqrt()))
}

/// Runs one manufactured problem at the given resolution.
pub fn run_manufactured(
    setup: &SuiteSetup,
    problem: ManufacturedProblem,
    nodes: usize,
    steps: usize,
) -> Result<RunResult> {
    let start = Instant::now();
    let grid = SpaceTimeGrid::new(setup.horizon, steps, nodes)?;
    let (computed, exact, iterations, converged) = if let Some(kind) = problem.equation() {
        let exterior = matches!(kind, EquationKind::ExteriorDirichlet | EquationKind::ExteriorNeumann);
        let (src, probes) = if exterior {
            (setup.inner_source(), setup.exterior_probes())
        } else {
            (setup.outer_source(), setup.interior_probes())
        };
        let mesh = BoundaryMesh::new(&setup.outer, nodes)?;
        let datum = match kind {
            EquationKind::ExteriorDirichlet | EquationKind::InteriorDirichlet => src.trace(&mesh, &grid),
            _ => src.normal_trace(&mesh, &grid),
        };
        let sol = solve_second_kind(kind, &setup.outer, &grid, &datum)?;
        (sol.field(&probes)?, src.values(&probes), None, true)
    } else {
        let (family, cfg) = match problem {
            ManufacturedProblem::LinearMixed => (
                Family::Linear,
                FixedPointConfig {
                    damping: 1.0,
                    ..setup.fixed_point
                },
            ),
            _ => (Family::SinPerturbed { amplitude: 0.1 }, setup.fixed_point),
        };
        let system = MixedSystem::new(setup.mixed_problem(&grid, family)?)?;
        let out = solve_nonlinear(&system, &cfg)?;
        let probes = setup.annulus_probes()?;
        (
            system.eval_solution(&out.mu, &out.eta, &probes)?,
            setup.inner_source().values(&probes),
            Some(out.iterations),
            out.converged,
        )
    };
    let (error_sup, error_l2) = errors(&computed, &exact);
    Ok(RunResult {
        problem: problem.name(),
        nodes,
        steps,
        error_sup,
        error_l2,
        iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// All six manufactured problems at one resolution.
pub fn manufactured_suite(setup: &SuiteSetup, nodes: usize, steps: usize) -> Result<Vec<RunResult>> {
    ManufacturedProblem::ALL
        .iter()
        .map(|&p| {
            run_manufactured(setup, p, nodes, steps).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", p.name())),
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub run: RunResult,
    pub empirical_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub problem: &'static str,
    pub rows: Vec<StudyRow>,
    /// `false` when some refinement did not reduce the error.
    pub monotone: bool,
}

impl ConvergenceStudy {
    pub const CSV_HEADER: &'static str = "problem,N_x,N_t,error_sup,error_l2,empirical_order,wall_seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let order = r.empirical_order.map_or(String::new(), |p| format!("{p:.6}"));
            let _ = writeln!(
                out,
                "{},{},{},{:.6e},{:.6e},{},{:.3}",
                r.run.problem, r.run.nodes, r.run.steps, r.run.error_sup, r.run.error_l2, order, r.run.wall_seconds
            );
        }
        out
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.empirical_order).collect()
    }
}

/// Runs `problem` on each `(N_x, N_t)` level and fits orders from successive error ratios.
///
/// The refinement ratio is taken from `N_t` when it changes, otherwise from `N_x`.
pub fn convergence_study(
    setup: &SuiteSetup,
    problem: ManufacturedProblem,
    levels: &[(usize, usize)],
) -> Result<ConvergenceStudy> {
    if levels.len() < 3 {
        return Err(Error::InvalidInput(
            "a convergence study needs at least 3 levels".into(),
        ));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(levels.len());
    let mut monotone = true;
    for &(nodes, steps) in levels {
        let run = run_manufactured(setup, problem, nodes, steps)?;
        let empirical_order = rows.last().and_then(|prev| {
            let ratio = if steps != prev.run.steps {
                steps as f64 / prev.run.steps as f64
            } else {
                nodes as f64 / prev.run.nodes as f64
            };
            (ratio != 1.0).then(|| (prev.run.error_sup / run.error_sup).ln() / ratio.ln())
        });
        if let Some(prev) = rows.last() {
            if !(run.error_sup < prev.run.error_sup) {
                monotone = false;
            }
        }
        rows.push(StudyRow { run, empirical_order });
    }
    Ok(ConvergenceStudy {
        problem: problem.name(),
        rows,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryResidual {
    /// `‖ν_Ω·∇u − f‖_∞ / ‖f‖_∞` on the outer boundary.
    pub neumann: f64,
    /// `‖ν_ω·∇u − G(u)‖_∞ / ‖G(u)‖_∞` on the cavity boundary.
    pub robin: f64,
    pub rows: Vec<usize>,
}

/// Checks both boundary conditions of a solved mixed problem with off-surface
/// extrapolation of `u = v_Ω[μ] + v_ω[η]` from inside the annulus.
pub fn boundary_condition_residual(system: &MixedSystem, mu: &Density, eta: &Density) -> Result<BoundaryResidual> {
    let j = &system.j_beta;
    let grid = j.grid;
    let rows = check_rows(grid.steps);
    let separation = validate_annulus(j.outer.curve(), j.inner.curve())?.separation;
    let outer_pot = LayerPotential::new(&j.outer, &grid, mu, Layer::Single)?;
    let inner_pot = LayerPotential::new(&j.inner, &grid, eta, Layer::Single)?;

    // (mesh, direction into the annulus)
    let sides = [(&j.outer, -1.0), (&j.inner, 1.0)];
    let mut results = [0.0; 2];
    for (k, (mesh, dir)) in sides.into_iter().enumerate() {
        let [d1, d2] = mesh_offsets(mesh);
        let (d1, d2) = (d1.min(0.25 * separation), d2.min(0.125 * separation));
        let n = mesh.len();
        let mut probes = Vec::with_capacity(rows.len() * n * 2);
        for &m in &rows {
            for i in 0..n {
                for d in [d1, d2] {
                    probes.push(Probe::new(grid.time(m), mesh.points[i] + mesh.normals[i] * (dir * d)));
                }
            }
        }
        let ga = outer_pot.gradients(&probes)?;
        let gb = inner_pot.gradients(&probes)?;
        let va = if k == 1 { outer_pot.values(&probes)? } else { Vec::new() };
        let vb = if k == 1 { inner_pot.values(&probes)? } else { Vec::new() };
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for (r, &m) in rows.iter().enumerate() {
            for i in 0..n {
                let base = (r * n + i) * 2;
                let flux = |p: usize| (ga[p] + gb[p]).dot(&mesh.normals[i]);
                let dn = extrapolate(d1, flux(base), d2, flux(base + 1));
                let target = if k == 0 {
                    system.problem.neumann.get(m, i)
                } else {
                    let u = extrapolate(d1, va[base] + vb[base], d2, va[base + 1] + vb[base + 1]);
                    system.problem.robin.eval(m, i, u)
                };
                worst = worst.max((dn - target).abs());
                scale = scale.max(target.abs());
            }
        }
        results[k] = relative_to(worst, scale);
    }
    Ok(BoundaryResidual {
        neumann: results[0],
        robin: results[1],
        rows,
    })
}
