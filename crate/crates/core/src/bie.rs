//! Linear boundary integral equations solved by time marching.
//!
//! Every discrete operator is block lower triangular in time, so a system
//! `(c I + K) μ = g` is solved row by row: the same-time block `c I + K_0`
//! is factored once and each step only needs the history of earlier rows.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::geometry::{validate_annulus, BoundaryCurve, BoundaryMesh, SpaceTimeGrid};
use crate::potentials::{
    assemble_cross, assemble_v, assemble_w, assemble_w_star, BlockOperator, CrossKind, Layer, LayerPotential, Probe,
};

/// Same-time blocks with `σ_min <= SINGULAR_RTOL · σ_max` are rejected.
const SINGULAR_RTOL: f64 = 1e-14;

pub const DEFAULT_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    ExteriorDirichlet,
    ExteriorNeumann,
    InteriorDirichlet,
    InteriorNeumann,
    FirstKindV,
}

impl EquationKind {
    pub const SECOND_KIND: [EquationKind; 4] = [
        EquationKind::ExteriorDirichlet,
        EquationKind::ExteriorNeumann,
        EquationKind::InteriorDirichlet,
        EquationKind::InteriorNeumann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EquationKind::ExteriorDirichlet => "ext-dirichlet",
            EquationKind::ExteriorNeumann => "ext-neumann",
            EquationKind::InteriorDirichlet => "int-dirichlet",
            EquationKind::InteriorNeumann => "int-neumann",
            EquationKind::FirstKindV => "first-kind-v",
        }
    }

    /// `(shift, layer, exterior)` for the second-kind equations.
    fn structure(self) -> Option<(f64, Layer, bool)> {
        match self {
            EquationKind::ExteriorDirichlet => Some((0.5, Layer::Double, true)),
            EquationKind::ExteriorNeumann => Some((-0.5, Layer::Single, true)),
            EquationKind::InteriorDirichlet => Some((-0.5, Layer::Double, false)),
            EquationKind::InteriorNeumann => Some((0.5, Layer::Single, false)),
            EquationKind::FirstKindV => None,
        }
    }
}

/// LU factorization of a same-time block plus its extreme singular values.
pub struct SameTimeFactor {
    lu: LU<f64, Dyn, Dyn>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl SameTimeFactor {
    pub fn new(block: DMatrix<f64>) -> Result<Self> {
        let sv = block.clone().singular_values();
        let sigma_max = sv.max();
        let sigma_min = sv.min();
        if !(sigma_min.is_finite() && sigma_min > SINGULAR_RTOL * sigma_max) {
            return Err(Error::SingularBlock { sigma_min, sigma_max });
        }
        Ok(Self {
            lu: block.lu(),
            sigma_min,
            sigma_max,
        })
    }

    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(rhs).expect("factor was checked to be nonsingular")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub equation: String,
    pub steps: usize,
    pub nodes: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub condition: f64,
    /// `‖A μ − g‖_∞ / max(‖g‖_∞, tiny)`.
    pub residual: f64,
}

fn check_datum(grid: &SpaceTimeGrid, nodes: usize, data: &Density, what: &str) -> Result<()> {
    if data.steps() != grid.steps || data.nodes() != nodes {
        return Err(Error::InvalidInput(format!(
            "{what} is {}x{}, expected {}x{}",
            data.steps(),
            data.nodes(),
            grid.steps,
            nodes
        )));
    }
    if let Some((step, node, value)) = data.first_non_finite() {
        return Err(Error::NonFinite { step, node, value });
    }
    Ok(())
}

fn relative(residual: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        residual / scale
    } else {
        residual
    }
}

/// A second-kind operator `shift · I + K` ready for marching solves.
pub struct SecondKindOperator {
    pub operator: BlockOperator,
    pub shift: f64,
    pub factor: SameTimeFactor,
}

impl SecondKindOperator {
    pub fn new(operator: BlockOperator, shift: f64) -> Result<Self> {
        let mut block = operator.block(0).clone();
        for i in 0..block.nrows() {
            block[(i, i)] += shift;
        }
        let factor = SameTimeFactor::new(block)?;
        Ok(Self {
            operator,
            shift,
            factor,
        })
    }

    pub fn apply(&self, density: &Density) -> Density {
        let mut out = self.operator.apply(density);
        out.axpy(self.shift, density);
        out
    }

    pub fn solve(&self, rhs: &Density) -> Density {
        let mut mu = Density::zeros(rhs.steps(), self.operator.sources());
        for m in 1..=rhs.steps() {
            let b = DVector::from_column_slice(rhs.row(m)) - self.operator.history(&mu, m);
            mu.set_row(m, self.factor.solve(&b).as_slice());
        }
        mu
    }
}

/// A solved linear boundary integral equation and its field representation.
pub struct LinearSolution {
    pub kind: EquationKind,
    pub mesh: BoundaryMesh,
    pub grid: SpaceTimeGrid,
    pub density: Density,
    pub report: SolveReport,
}

impl LinearSolution {
    /// The represented field at off-boundary probes on the problem's side.
    pub fn field(&self, probes: &[Probe]) -> Result<Vec<f64>> {
        let Some((_, layer, exterior)) = self.kind.structure() else {
            return Err(Error::InvalidInput(
                "a first-kind solve has no associated field representation".into(),
            ));
        };
        for p in probes {
            if self.mesh.curve().contains(&p.x) == exterior {
                return Err(Error::InvalidInput(format!(
                    "probe ({}, {}) is not in the {} region",
                    p.x.x,
                    p.x.y,
                    if exterior { "exterior" } else { "interior" }
                )));
            }
        }
        LayerPotential::new(&self.mesh, &self.grid, &self.density, layer)?.values(probes)
    }
}

/// Assembles `shift · I + K` for a second-kind equation.
pub fn second_kind_operator(
    kind: EquationKind,
    mesh: &BoundaryMesh,
    grid: &SpaceTimeGrid,
) -> Result<SecondKindOperator> {
    let Some((shift, layer, _)) = kind.structure() else {
        return Err(Error::InvalidInput("not a second-kind equation".into()));
    };
    let op = match layer {
        Layer::Double => assemble_w(mesh, grid)?,
        Layer::Single => assemble_w_star(mesh, grid)?,
    };
    SecondKindOperator::new(op, shift)
}

pub fn solve_second_kind(
    kind: EquationKind,
    curve: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    datum: &Density,
) -> Result<LinearSolution> {
    let mesh = BoundaryMesh::new(curve, grid.nodes)?;
    check_datum(grid, mesh.len(), datum, "boundary datum")?;
    let op = second_kind_operator(kind, &mesh, grid)?;
    let density = op.solve(datum);
    let residual = op.apply(&density).difference(datum).sup_norm();
    let report = SolveReport {
        equation: kind.name().into(),
        steps: grid.steps,
        nodes: mesh.len(),
        sigma_min: op.factor.sigma_min,
        sigma_max: op.factor.sigma_max,
        condition: op.factor.condition(),
        residual: relative(residual, datum.sup_norm()),
    };
    Ok(LinearSolution {
        kind,
        mesh,
        grid: *grid,
        density,
        report,
    })
}

/// `(½I + W)μ = g`, `u = w[μ]` outside the curve.
pub fn solve_exterior_dirichlet(curve: &BoundaryCurve, grid: &SpaceTimeGrid, g: &Density) -> Result<LinearSolution> {
    solve_second_kind(EquationKind::ExteriorDirichlet, curve, grid, g)
}

/// `(−½I + W*)μ = g`, `u = v[μ]` outside the curve.
pub fn solve_exterior_neumann(curve: &BoundaryCurve, grid: &SpaceTimeGrid, g: &Density) -> Result<LinearSolution> {
    solve_second_kind(EquationKind::ExteriorNeumann, curve, grid, g)
}

/// `(−½I + W)μ = g`, `u = w[μ]` inside the curve.
pub fn solve_interior_dirichlet(curve: &BoundaryCurve, grid: &SpaceTimeGrid, g: &Density) -> Result<LinearSolution> {
    solve_second_kind(EquationKind::InteriorDirichlet, curve, grid, g)
}

/// `(½I + W*)μ = g`, `u = v[μ]` inside the curve.
pub fn solve_interior_neumann(curve: &BoundaryCurve, grid: &SpaceTimeGrid, g: &Density) -> Result<LinearSolution> {
    solve_second_kind(EquationKind::InteriorNeumann, curve, grid, g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstKindReport {
    pub steps: usize,
    pub nodes: usize,
    pub threshold: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Condition number of the same-time block before truncation.
    pub condition: f64,
    pub retained_modes: usize,
    pub residual: f64,
}

pub struct FirstKindSolution {
    pub density: Density,
    pub report: FirstKindReport,
}

/// Truncated-SVD pseudo-inverse of a square block.
fn truncated_pinv(block: DMatrix<f64>, threshold: f64) -> Result<(DMatrix<f64>, f64, f64, usize)> {
    let svd = block.svd(true, true);
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let cutoff = threshold * sigma_max;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let n = sv.len();
    let mut pinv = DMatrix::zeros(v_t.ncols(), u.nrows());
    let mut kept = 0;
    for k in 0..n {
        if sv[k] > cutoff && sv[k] > 0.0 {
            kept += 1;
            pinv += v_t.row(k).transpose() * (u.column(k).transpose() / sv[k]);
        }
    }
    if kept == 0 {
        return Err(Error::RankFailure { threshold });
    }
    Ok((pinv, sigma_min, sigma_max, kept))
}

/// `Vμ = ξ` with the same-time block inverted by truncated SVD.
pub fn solve_first_kind_v(
    curve: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    xi: &Density,
    threshold: f64,
) -> Result<FirstKindSolution> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "truncation threshold must be finite and non-negative, got {threshold}"
        )));
    }
    let mesh = BoundaryMesh::new(curve, grid.nodes)?;
    check_datum(grid, mesh.len(), xi, "first-kind datum")?;
    let v = assemble_v(&mesh, grid)?;
    let (pinv, sigma_min, sigma_max, kept) = truncated_pinv(v.block(0).clone(), threshold)?;
    let mut mu = Density::zeros(grid.steps, mesh.len());
    for m in 1..=grid.steps {
        let b = DVector::from_column_slice(xi.row(m)) - v.history(&mu, m);
        mu.set_row(m, (&pinv * b).as_slice());
    }
    let residual = v.apply(&mu).difference(xi).sup_norm();
    Ok(FirstKindSolution {
        report: FirstKindReport {
            steps: grid.steps,
            nodes: mesh.len(),
            threshold,
            sigma_min,
            sigma_max,
            condition: sigma_max / sigma_min,
            retained_modes: kept,
            residual: relative(residual, xi.sup_norm()),
        },
        density: mu,
    })
}

/// The linearized operator of the mixed Neumann/Robin problem,
///
/// ```text
/// J₁(μ, η) = (½I + W*_Ω)μ + N_{ω→Ω}η
/// J₂(μ, η) = (−½I + W*_ω)η + N_{Ω→ω}μ − β(V_{Ω→ω}μ + V_ω η)
/// ```
///
/// where `N` are normal derivatives of single layers across boundaries.
pub struct JBetaOperator {
    pub grid: SpaceTimeGrid,
    pub outer: BoundaryMesh,
    pub inner: BoundaryMesh,
    pub w_star_outer: BlockOperator,
    pub normal_inner_to_outer: BlockOperator,
    pub normal_outer_to_inner: BlockOperator,
    pub w_star_inner: BlockOperator,
    pub value_outer_to_inner: BlockOperator,
    pub v_inner: BlockOperator,
    beta: Density,
    factors: Vec<SameTimeFactor>,
    /// Factor used at each lattice row (entry 0 unused).
    row_factor: Vec<usize>,
}

impl JBetaOperator {
    pub fn beta(&self) -> &Density {
        &self.beta
    }

    pub fn outer_nodes(&self) -> usize {
        self.outer.len()
    }

    pub fn inner_nodes(&self) -> usize {
        self.inner.len()
    }

    /// Same-time block for a given row of β.
    pub fn same_time_block(&self, beta_row: &[f64]) -> DMatrix<f64> {
        same_time_block(
            [
                &self.w_star_outer,
                &self.normal_inner_to_outer,
                &self.normal_outer_to_inner,
                &self.w_star_inner,
                &self.value_outer_to_inner,
                &self.v_inner,
            ],
            beta_row,
        )
    }

    /// Smallest singular value over the distinct same-time blocks.
    pub fn smallest_singular_value(&self) -> f64 {
        self.factors.iter().map(|f| f.sigma_min).fold(f64::INFINITY, f64::min)
    }

    pub fn largest_condition(&self) -> f64 {
        self.factors.iter().map(|f| f.condition()).fold(0.0, f64::max)
    }

    pub fn distinct_factors(&self) -> usize {
        self.factors.len()
    }

    /// `h = v⁺_Ω[μ]|∂ω + V_ω[η]`, the single-layer trace on the cavity boundary.
    pub fn cavity_trace(&self, mu: &Density, eta: &Density) -> Density {
        let mut h = self.value_outer_to_inner.apply(mu);
        h.axpy(1.0, &self.v_inner.apply(eta));
        h
    }

    pub fn apply(&self, mu: &Density, eta: &Density) -> (Density, Density) {
        let mut r1 = self.w_star_outer.apply(mu);
        r1.axpy(0.5, mu);
        r1.axpy(1.0, &self.normal_inner_to_outer.apply(eta));
        let mut r2 = self.w_star_inner.apply(eta);
        r2.axpy(-0.5, eta);
        r2.axpy(1.0, &self.normal_outer_to_inner.apply(mu));
        let h = self.cavity_trace(mu, eta);
        r2.axpy(-1.0, &self.beta.hadamard(&h));
        (r1, r2)
    }

    pub fn solve(&self, rhs_outer: &Density, rhs_inner: &Density) -> Result<(Density, Density)> {
        check_datum(&self.grid, self.outer.len(), rhs_outer, "outer right-hand side")?;
        check_datum(&self.grid, self.inner.len(), rhs_inner, "inner right-hand side")?;
        let (no, ni) = (self.outer.len(), self.inner.len());
        let mut mu = Density::zeros(self.grid.steps, no);
        let mut eta = Density::zeros(self.grid.steps, ni);
        let mut b = DVector::zeros(no + ni);
        for m in 1..=self.grid.steps {
            let h1 = self.w_star_outer.history(&mu, m) + self.normal_inner_to_outer.history(&eta, m);
            let trace = self.value_outer_to_inner.history(&mu, m) + self.v_inner.history(&eta, m);
            let h2 = self.w_star_inner.history(&eta, m) + self.normal_outer_to_inner.history(&mu, m);
            let beta = self.beta.row(m);
            for i in 0..no {
                b[i] = rhs_outer.get(m, i) - h1[i];
            }
            for i in 0..ni {
                b[no + i] = rhs_inner.get(m, i) - (h2[i] - beta[i] * trace[i]);
            }
            let x = self.factors[self.row_factor[m]].solve(&b);
            mu.set_row(m, &x.as_slice()[..no]);
            eta.set_row(m, &x.as_slice()[no..]);
        }
        Ok((mu, eta))
    }

    /// `max(‖J₁ − r₁‖_∞, ‖J₂ − r₂‖_∞)`.
    pub fn residual(&self, mu: &Density, eta: &Density, rhs_outer: &Density, rhs_inner: &Density) -> f64 {
        let (r1, r2) = self.apply(mu, eta);
        r1.difference(rhs_outer)
            .sup_norm()
            .max(r2.difference(rhs_inner).sup_norm())
    }
}

fn same_time_block(ops: [&BlockOperator; 6], beta_row: &[f64]) -> DMatrix<f64> {
    let [wo, nio, noi, wi, voi, vi] = ops;
    let (no, ni) = (wo.targets(), wi.targets());
    let mut block = DMatrix::zeros(no + ni, no + ni);
    block.view_mut((0, 0), (no, no)).copy_from(wo.block(0));
    block.view_mut((0, no), (no, ni)).copy_from(nio.block(0));
    block.view_mut((no, 0), (ni, no)).copy_from(noi.block(0));
    block.view_mut((no, no), (ni, ni)).copy_from(wi.block(0));
    for i in 0..no {
        block[(i, i)] += 0.5;
    }
    for i in 0..ni {
        block[(no + i, no + i)] -= 0.5;
        let beta = beta_row[i];
        if beta != 0.0 {
            for j in 0..no {
                block[(no + i, j)] -= beta * voi.block(0)[(i, j)];
            }
            for j in 0..ni {
                block[(no + i, no + j)] -= beta * vi.block(0)[(i, j)];
            }
        }
    }
    block
}

/// Assembles and factors `J_β` for the annulus between `outer` and `inner`.
pub fn assemble_j_beta(
    outer: &BoundaryCurve,
    inner: &BoundaryCurve,
    grid: &SpaceTimeGrid,
    beta: &Density,
) -> Result<JBetaOperator> {
    validate_annulus(outer, inner)?;
    let outer_mesh = BoundaryMesh::new(outer, grid.nodes)?;
    let inner_mesh = BoundaryMesh::new(inner, grid.nodes)?;
    check_datum(grid, inner_mesh.len(), beta, "β")?;
    let w_star_outer = assemble_w_star(&outer_mesh, grid)?;
    let normal_inner_to_outer = assemble_cross(&inner_mesh, &outer_mesh, grid, CrossKind::NormalDerivative)?;
    let normal_outer_to_inner = assemble_cross(&outer_mesh, &inner_mesh, grid, CrossKind::NormalDerivative)?;
    let w_star_inner = assemble_w_star(&inner_mesh, grid)?;
    let value_outer_to_inner = assemble_cross(&outer_mesh, &inner_mesh, grid, CrossKind::Value)?;
    let v_inner = assemble_v(&inner_mesh, grid)?;

    let ops = [
        &w_star_outer,
        &normal_inner_to_outer,
        &normal_outer_to_inner,
        &w_star_inner,
        &value_outer_to_inner,
        &v_inner,
    ];
    let mut factors = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut row_factor = vec![0; grid.steps + 1];
    for (m, slot) in row_factor.iter_mut().enumerate().skip(1) {
        let row = beta.row(m);
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        *slot = match seen.get(&key) {
            Some(&idx) => idx,
            None => {
                factors.push(SameTimeFactor::new(same_time_block(ops, row))?);
                seen.insert(key, factors.len() - 1);
                factors.len() - 1
            }
        };
    }
    Ok(JBetaOperator {
        grid: *grid,
        outer: outer_mesh,
        inner: inner_mesh,
        w_star_outer,
        normal_inner_to_outer,
        normal_outer_to_inner,
        w_star_inner,
        value_outer_to_inner,
        v_inner,
        beta: beta.clone(),
        factors,
        row_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn smooth(grid: &SpaceTimeGrid, phase: f64) -> Density {
        let params = grid.params();
        Density::sample(grid, grid.nodes, |t, j| t * (1.0 + 0.5 * (params[j] + phase).cos()))
    }

    #[test]
    fn zero_data_gives_zero_density() {
        let curve = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
        let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
        for kind in EquationKind::SECOND_KIND {
            let sol = solve_second_kind(kind, &curve, &grid, &Density::zeros(4, 16)).unwrap();
            assert_eq!(sol.density.sup_norm(), 0.0);
        }
    }

    #[test]
    fn second_kind_round_trip() {
        let curve = BoundaryCurve::star(Point::zeros(), 1.0, 0.2, 3).unwrap();
        let grid = SpaceTimeGrid::new(0.5, 6, 32).unwrap();
        let mesh = BoundaryMesh::new(&curve, 32).unwrap();
        let mu = smooth(&grid, 0.3);
        for kind in EquationKind::SECOND_KIND {
            let op = second_kind_operator(kind, &mesh, &grid).unwrap();
            let back = op.solve(&op.apply(&mu));
            assert!(back.difference(&mu).sup_norm() < 1e-12 * mu.sup_norm());
        }
    }

    #[test]
    fn first_kind_round_trip_and_rank_failure() {
        let curve = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
        let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
        let mesh = BoundaryMesh::new(&curve, 16).unwrap();
        let mu = smooth(&grid, 1.0);
        let xi = assemble_v(&mesh, &grid).unwrap().apply(&mu);
        let sol = solve_first_kind_v(&curve, &grid, &xi, DEFAULT_TRUNCATION).unwrap();
        assert!(sol.density.difference(&mu).sup_norm() < 1e-9);
        assert_eq!(sol.report.retained_modes, 16);
        assert!(matches!(
            solve_first_kind_v(&curve, &grid, &xi, 1.0),
            Err(Error::RankFailure { .. })
        ));
    }

    #[test]
    fn field_rejects_probes_on_the_wrong_side() {
        let curve = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
        let grid = SpaceTimeGrid::new(0.5, 4, 16).unwrap();
        let sol = solve_exterior_neumann(&curve, &grid, &smooth(&grid, 0.0)).unwrap();
        assert!(sol.field(&[Probe::new(0.5, Point::new(0.2, 0.0))]).is_err());
        assert!(sol.field(&[Probe::new(0.5, Point::new(2.0, 0.0))]).is_ok());
    }

    #[test]
    fn j_beta_round_trip() {
        let outer = BoundaryCurve::circle(Point::zeros(), 1.0).unwrap();
        let inner = BoundaryCurve::circle(Point::zeros(), 0.4).unwrap();
        let grid = SpaceTimeGrid::new(0.5, 5, 16).unwrap();
        let beta = Density::sample(&grid, 16, |t, _| 1.0 + t);
        let j = assemble_j_beta(&outer, &inner, &grid, &beta).unwrap();
        assert_eq!(j.distinct_factors(), 5);
        let (mu, eta) = (smooth(&grid, 0.1), smooth(&grid, 2.0));
        let (r1, r2) = j.apply(&mu, &eta);
        let (m2, e2) = j.solve(&r1, &r2).unwrap();
        assert!(m2.difference(&mu).sup_norm() < 1e-11);
        assert!(e2.difference(&eta).sup_norm() < 1e-11);
    }
}
