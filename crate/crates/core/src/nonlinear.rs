//! The nonlinear Robin condition, its superposition operator and the damped
//! fixed-point iteration for the mixed problem on an annulus.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bie::{assemble_j_beta, JBetaOperator};
use crate::density::Density;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{BoundaryCurve, SpaceTimeGrid};
use crate::potentials::{Layer, LayerPotential, Probe};

/// `G(t, x, u)` families. The built-in ones are `βu` plus a perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Linear,
    /// `βu + a·sin(u)`
    SinPerturbed {
        amplitude: f64,
    },
    /// `βu + c·u/(1 + u²)`
    Saturating {
        c: f64,
    },
    /// `βu + c·u²`
    Quadratic {
        c: f64,
    },
    /// Arbitrary `G(t, u, θ)`; β is supplied separately.
    Expression(Expression),
}

impl Family {
    fn eval(&self, beta: f64, t: f64, u: f64, theta: f64) -> f64 {
        match self {
            Family::Linear => beta * u,
            Family::SinPerturbed { amplitude } => beta * u + amplitude * u.sin(),
            Family::Saturating { c } => beta * u + c * u / (1.0 + u * u),
            Family::Quadratic { c } => beta * u + c * u * u,
            Family::Expression(e) => e.eval(t, u, theta),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::SinPerturbed { .. } => "sin-perturbed",
            Family::Saturating { .. } => "saturating",
            Family::Quadratic { .. } => "quadratic",
            Family::Expression(_) => "expression",
        }
    }
}

/// Declared growth constants in `‖N_G(h) − βh‖ ≤ C_G (1 + ‖h‖)^δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBound {
    pub c_g: f64,
    pub delta: f64,
}

/// `G` on the lattice of the cavity boundary: a family, the coefficient β and
/// an optional additive offset `g₀(t, x)`.
#[derive(Debug, Clone)]
pub struct RobinNonlinearity {
    family: Family,
    grid: SpaceTimeGrid,
    params: Vec<f64>,
    beta: Density,
    offset: Option<Density>,
    pub growth: Option<GrowthBound>,
}

impl RobinNonlinearity {
    pub fn new(family: Family, beta: Density, grid: &SpaceTimeGrid, growth: Option<GrowthBound>) -> Result<Self> {
        Self::with_offset(family, beta, None, grid, growth)
    }

    pub fn with_offset(
        family: Family,
        beta: Density,
        offset: Option<Density>,
        grid: &SpaceTimeGrid,
        growth: Option<GrowthBound>,
    ) -> Result<Self> {
        if beta.steps() != grid.steps || beta.nodes() != grid.nodes {
            return Err(Error::InvalidInput("β does not match the lattice".into()));
        }
        if let Some((step, node, value)) = beta.first_non_finite() {
            return Err(Error::NonFinite { step, node, value });
        }
        if let Some(off) = &offset {
            if !off.same_shape(&beta) {
                return Err(Error::InvalidInput("offset does not match the lattice".into()));
            }
            if let Some((step, node, value)) = off.first_non_finite() {
                return Err(Error::NonFinite { step, node, value });
            }
        }
        if let Some(g) = growth {
            if !(g.c_g > 0.0 && g.delta > 0.0 && g.delta < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "growth bound needs C_G > 0 and δ in (0, 1), got C_G = {}, δ = {}",
                    g.c_g, g.delta
                )));
            }
        }
        let g = Self {
            family,
            grid: *grid,
            params: grid.params(),
            beta,
            offset,
            growth,
        };
        for (node, &theta) in g.params.iter().enumerate() {
            let value = g.family.eval(0.0, 0.0, 0.0, theta);
            if !(value.abs() <= 1e-12) {
                return Err(Error::NonzeroAtOrigin { node, value });
            }
        }
        Ok(g)
    }

    /// Adds the offset that makes `u*` satisfy `ν·∇u* = G(t, x, u*)` on the lattice.
    pub fn manufactured(
        family: Family,
        beta: Density,
        grid: &SpaceTimeGrid,
        exact_trace: &Density,
        exact_flux: &Density,
        growth: Option<GrowthBound>,
    ) -> Result<Self> {
        let plain = Self::new(family, beta, grid, growth)?;
        let mut offset = exact_flux.clone();
        offset.axpy(-1.0, &plain.apply_family(exact_trace)?);
        Self::with_offset(plain.family, plain.beta, Some(offset), grid, growth)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn beta(&self) -> &Density {
        &self.beta
    }

    pub fn offset(&self) -> Option<&Density> {
        self.offset.as_ref()
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    /// `G` at lattice point `(m, j)`.
    pub fn eval(&self, m: usize, j: usize, u: f64) -> f64 {
        let base = self
            .family
            .eval(self.beta.get(m, j), self.grid.time(m), u, self.params[j]);
        base + self.offset.as_ref().map_or(0.0, |o| o.get(m, j))
    }

    fn apply_family(&self, trace: &Density) -> Result<Density> {
        self.check_trace(trace)?;
        let mut out = Density::zeros_like(trace);
        for m in 1..=trace.steps() {
            let row: Vec<f64> = (0..trace.nodes())
                .map(|j| {
                    self.family
                        .eval(self.beta.get(m, j), self.grid.time(m), trace.get(m, j), self.params[j])
                })
                .collect();
            out.set_row(m, &row);
        }
        Ok(out)
    }

    fn check_trace(&self, trace: &Density) -> Result<()> {
        if !trace.same_shape(&self.beta) {
            return Err(Error::InvalidInput(format!(
                "trace is {}x{}, nonlinearity lives on {}x{}",
                trace.steps(),
                trace.nodes(),
                self.beta.steps(),
                self.beta.nodes()
            )));
        }
        Ok(())
    }

    /// The superposition operator `N_G(h)(t, x) = G(t, x, h(t, x))`.
    pub fn apply(&self, trace: &Density) -> Result<Density> {
        self.check_trace(trace)?;
        let mut out = Density::zeros_like(trace);
        for m in 1..=trace.steps() {
            let mut row = Vec::with_capacity(trace.nodes());
            for j in 0..trace.nodes() {
                let value = self.eval(m, j, trace.get(m, j));
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        step: m,
                        node: j,
                        value,
                    });
                }
                row.push(value);
            }
            out.set_row(m, &row);
        }
        Ok(out)
    }

    /// `N_G(h) − βh`.
    pub fn remainder(&self, trace: &Density) -> Result<Density> {
        let mut out = self.apply(trace)?;
        out.axpy(-1.0, &self.beta.hadamard(trace));
        Ok(out)
    }
}

/// `β(t, x) = ∂G/∂u (t, x, 0)` for an expression nonlinearity.
pub fn derivative_beta(expr: &Expression, grid: &SpaceTimeGrid) -> Density {
    let params = grid.params();
    Density::sample(grid, grid.nodes, |t, j| expr.derivative_u(t, 0.0, params[j]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub scales: Vec<f64>,
    /// `max ‖N_G(h) − βh‖_∞` over the probe traces at each scale.
    pub remainders: Vec<f64>,
    /// Least-squares slope of `log remainder` against `log scale`.
    pub slope: f64,
    pub fitted_c: f64,
    pub fitted_delta: f64,
    pub declared_dominates: Option<bool>,
    pub pass: bool,
}

/// Samples `‖N_G(h) − βh‖_∞` on traces of prescribed sup norm and fits the growth exponent.
pub fn check_growth_condition(g: &RobinNonlinearity, sweep: &[f64]) -> Result<GrowthReport> {
    if sweep.is_empty() || sweep.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidInput("growth sweep needs positive finite scales".into()));
    }
    let grid = g.grid;
    let params = grid.params();
    let steps = grid.steps as f64;
    let shapes: [&dyn Fn(usize, usize) -> f64; 4] = [&|_, _| 1.0, &|_, _| -1.0, &|_, j| params[j].cos(), &|m, _| {
        m as f64 / steps
    }];
    let mut remainders = Vec::with_capacity(sweep.len());
    for &s in sweep {
        let mut worst = 0.0f64;
        for shape in shapes {
            let h = Density::from_fn(grid.steps, grid.nodes, |m, j| s * shape(m, j));
            worst = worst.max(g.remainder(&h)?.sup_norm());
        }
        remainders.push(worst);
    }
    let points: Vec<(f64, f64)> = sweep
        .iter()
        .zip(&remainders)
        .filter(|(_, r)| **r > 0.0)
        .map(|(s, r)| (s.ln(), r.ln()))
        .collect();
    let slope = if points.len() < 2 {
        0.0
    } else {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    };
    let fitted_delta = slope.max(0.0);
    let fitted_c = sweep
        .iter()
        .zip(&remainders)
        .map(|(s, r)| r / (1.0 + s).powf(fitted_delta))
        .fold(0.0, f64::max);
    let declared_dominates = g.growth.map(|b| {
        sweep
            .iter()
            .zip(&remainders)
            .all(|(s, r)| *r <= b.c_g * (1.0 + s).powf(b.delta) * (1.0 + 1e-12))
    });
    let pass = slope < 1.0 && declared_dominates.unwrap_or(true);
    Ok(GrowthReport {
        scales: sweep.to_vec(),
        remainders,
        slope,
        fitted_c,
        fitted_delta,
        declared_dominates,
        pass,
    })
}

/// The mixed Neumann/Robin problem on the annulus between `outer` and `inner`.
#[derive(Debug, Clone)]
pub struct MixedProblem {
    pub outer: BoundaryCurve,
    pub inner: BoundaryCurve,
    pub grid: SpaceTimeGrid,
    /// Neumann datum on the outer boundary.
    pub neumann: Density,
    pub robin: RobinNonlinearity,
}

/// A mixed problem with its linearized operator assembled.
pub struct MixedSystem {
    pub problem: MixedProblem,
    pub j_beta: JBetaOperator,
}

impl MixedSystem {
    pub fn new(problem: MixedProblem) -> Result<Self> {
        let grid = problem.grid;
        if problem.neumann.steps() != grid.steps || problem.neumann.nodes() != grid.nodes {
            return Err(Error::InvalidInput("Neumann datum does not match the lattice".into()));
        }
        let j_beta = assemble_j_beta(&problem.outer, &problem.inner, &grid, problem.robin.beta())?;
        Ok(Self { problem, j_beta })
    }

    /// `T_β(μ, η) = J_β⁻¹ (f, N_G(h) − βh)` with `h` the cavity trace.
    pub fn t_beta(&self, mu: &Density, eta: &Density) -> Result<(Density, Density)> {
        let h = self.j_beta.cavity_trace(mu, eta);
        let rhs = self.problem.robin.remainder(&h)?;
        self.j_beta.solve(&self.problem.neumann, &rhs)
    }

    /// `u = v_Ω[μ] + v_ω[η]` at probes strictly inside the annulus.
    pub fn eval_solution(&self, mu: &Density, eta: &Density, probes: &[Probe]) -> Result<Vec<f64>> {
        eval_solution(&self.j_beta, mu, eta, probes)
    }
}

pub fn eval_solution(j: &JBetaOperator, mu: &Density, eta: &Density, probes: &[Probe]) -> Result<Vec<f64>> {
    let outer_poly = j.outer.curve().polyline(crate::geometry::POLYLINE_SEGMENTS);
    let inner_poly = j.inner.curve().polyline(crate::geometry::POLYLINE_SEGMENTS);
    for p in probes {
        let inside_outer = crate::geometry::winding_number(&outer_poly, &p.x) != 0;
        let inside_inner = crate::geometry::winding_number(&inner_poly, &p.x) != 0;
        if !inside_outer || inside_inner {
            return Err(Error::InvalidInput(format!(
                "probe ({}, {}) is outside the annulus",
                p.x.x, p.x.y
            )));
        }
    }
    let a = LayerPotential::new(&j.outer, &j.grid, mu, Layer::Single)?.values(probes)?;
    let b = LayerPotential::new(&j.inner, &j.grid, eta, Layer::Single)?.values(probes)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Anderson memory depth; `None` is plain damped Picard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anderson: Option<usize>,
}

fn default_damping() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_max_iterations() -> usize {
    200
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            damping: default_damping(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            anderson: None,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.anderson == Some(0) {
            return Err(Error::InvalidInput("Anderson depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖x_k − T_β(x_k)‖_∞`
    pub residual: f64,
}

pub struct NonlinearOutcome {
    pub mu: Density,
    pub eta: Density,
    pub converged: bool,
    /// Index `k` of the returned iterate.
    pub iterations: usize,
    pub residual: f64,
    pub log: Vec<IterationRecord>,
}

fn flatten(mu: &Density, eta: &Density) -> DVector<f64> {
    DVector::from_iterator(
        mu.values().len() + eta.values().len(),
        mu.values().iter().chain(eta.values()).copied(),
    )
}

fn unflatten(x: &DVector<f64>, like_mu: &Density, like_eta: &Density) -> (Density, Density) {
    let split = like_mu.values().len();
    let rows = |data: &[f64], d: &Density| {
        let mut out = Density::zeros_like(d);
        for m in 1..=d.steps() {
            out.set_row(m, &data[m * d.nodes()..(m + 1) * d.nodes()]);
        }
        out
    };
    (
        rows(&x.as_slice()[..split], like_mu),
        rows(&x.as_slice()[split..], like_eta),
    )
}

/// Damped Picard (optionally Anderson-accelerated) iteration for `x = T_β(x)` from `x₀ = 0`.
///
/// Non-convergence is not an error: the outcome carries the best iterate
/// and the full residual history.
pub fn solve_nonlinear(system: &MixedSystem, cfg: &FixedPointConfig) -> Result<NonlinearOutcome> {
    cfg.validate()?;
    let grid = system.problem.grid;
    let zero_mu = Density::zeros(grid.steps, system.j_beta.outer_nodes());
    let zero_eta = Density::zeros(grid.steps, system.j_beta.inner_nodes());
    let mut x = flatten(&zero_mu, &zero_eta);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, DVector<f64>)> = None;
    let mut dx_hist: Vec<DVector<f64>> = Vec::new();
    let mut df_hist: Vec<DVector<f64>> = Vec::new();
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let theta = cfg.damping;

    for k in 0..=cfg.max_iterations {
        let (mu, eta) = unflatten(&x, &zero_mu, &zero_eta);
        let (tm, te) = system.t_beta(&mu, &eta)?;
        let f = flatten(&tm, &te) - &x;
        let residual = f.amax();
        if !residual.is_finite() {
            let idx = f.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite {
                step: k,
                node: idx,
                value: f[idx],
            });
        }
        log.push(IterationRecord { iteration: k, residual });
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, k, x.clone()));
        }
        if residual <= cfg.tolerance {
            return Ok(NonlinearOutcome {
                mu,
                eta,
                converged: true,
                iterations: k,
                residual,
                log,
            });
        }
        if k == cfg.max_iterations {
            break;
        }
        let next = match cfg.anderson {
            None => &x + &f * theta,
            Some(depth) => {
                if let Some((px, pf)) = &prev {
                    dx_hist.push(&x - px);
                    df_hist.push(&f - pf);
                    if dx_hist.len() > depth {
                        dx_hist.remove(0);
                        df_hist.remove(0);
                    }
                }
                prev = Some((x.clone(), f.clone()));
                anderson_step(&x, &f, &dx_hist, &df_hist, theta)
            }
        };
        x = next;
    }
    let (residual, k, xb) = best.expect("at least one iterate");
    let (mu, eta) = unflatten(&xb, &zero_mu, &zero_eta);
    Ok(NonlinearOutcome {
        mu,
        eta,
        converged: false,
        iterations: k,
        residual,
        log,
    })
}

fn anderson_step(
    x: &DVector<f64>,
    f: &DVector<f64>,
    dx: &[DVector<f64>],
    df: &[DVector<f64>],
    theta: f64,
) -> DVector<f64> {
    let mut next = x + f * theta;
    if dx.is_empty() {
        return next;
    }
    let fmat = DMatrix::from_columns(df);
    let Ok(gamma) = fmat.clone().svd(true, true).solve(f, 1e-12) else {
        return next;
    };
    for (i, g) in gamma.iter().enumerate() {
        next -= (&dx[i] + &df[i] * theta) * *g;
    }
    next
}
