//! TOML run configuration for the command-line driver.
//!
//! Every table rejects unknown keys. Errors carry the 1-based line of the
//! offending entry when it can be located in the source text.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::expr::Expression;
use crate::geometry::{validate_annulus, BoundaryCurve, CurveShape, Point, SpaceTimeGrid};
use crate::nonlinear::{derivative_beta, Family, FixedPointConfig, GrowthBound};
use crate::potentials::Probe;
use crate::verify::ManufacturedProblem;

pub const MIN_NODES: usize = 8;
pub const MAX_NODES: usize = 4096;
pub const MAX_STEPS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    /// Dotted path of the offending field, when known.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub solver: FixedPointConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub kernels: KernelsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub outer: CurveShape,
    pub inner: CurveShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Final time `T`.
    pub horizon: f64,
    /// `N_t`
    pub steps: usize,
    /// `N_x`, shared by both boundaries.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Replace `f` by the point-source flux and add the matching offset to `G`.
    #[serde(default = "default_true")]
    pub manufactured: bool,
    #[serde(default)]
    pub neumann: NeumannSpec,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthBound>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manufactured: true,
            neumann: NeumannSpec::default(),
            nonlinearity: NonlinearitySpec::default(),
            beta: BetaSpec::default(),
            growth: None,
        }
    }
}

/// Neumann datum `f` on the outer boundary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NeumannSpec {
    #[default]
    Zero,
    /// `f(t, θ)`; the variable `u` is bound to 0.
    Expression { expr: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Linear,
    /// Linear `G` plus the manufactured offset, regardless of `data.manufactured`.
    AffineManufactured,
    SinPerturbed {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    Saturating {
        c: f64,
    },
    Quadratic {
        c: f64,
    },
    Expression {
        expr: String,
    },
}

fn default_amplitude() -> f64 {
    0.1
}

impl Default for NonlinearitySpec {
    fn default() -> Self {
        NonlinearitySpec::SinPerturbed {
            amplitude: default_amplitude(),
        }
    }
}

impl NonlinearitySpec {
    pub fn family(&self) -> Result<Family, ConfigError> {
        Ok(match self {
            NonlinearitySpec::Linear | NonlinearitySpec::AffineManufactured => Family::Linear,
            NonlinearitySpec::SinPerturbed { amplitude } => Family::SinPerturbed { amplitude: *amplitude },
            NonlinearitySpec::Saturating { c } => Family::Saturating { c: *c },
            NonlinearitySpec::Quadratic { c } => Family::Quadratic { c: *c },
            NonlinearitySpec::Expression { expr } => {
                Family::Expression(parse_expression(expr, "data.nonlinearity.expr")?)
            }
        })
    }
}

/// Linearization coefficient β on the cavity boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaSpec {
    Constant {
        value: f64,
    },
    /// `β(t, θ)`; `u` is bound to 0.
    Expression {
        expr: String,
    },
    /// `∂G/∂u` at `u = 0`; only for expression nonlinearities.
    Derivative,
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    #[default]
    None,
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub dump_operators: DumpFormat,
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
            dump_operators: DumpFormat::None,
        }
    }
}

/// Field probes `[t, x, y]`; empty means three points midway across the annulus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    /// Random densities per jump check.
    #[serde(default = "default_densities")]
    pub densities: usize,
    #[serde(default = "default_single_tol")]
    pub single_tolerance: f64,
    #[serde(default = "default_double_tol")]
    pub double_tolerance: f64,
    #[serde(default = "default_green_tol")]
    pub green_tolerance: f64,
    /// Bound on the relative probe error of each manufactured run.
    #[serde(default = "default_manufactured_tol")]
    pub manufactured_tolerance: f64,
    #[serde(default = "default_true")]
    pub manufactured_suite: bool,
}

fn default_densities() -> usize {
    5
}
fn default_single_tol() -> f64 {
    3e-2
}
fn default_double_tol() -> f64 {
    5e-2
}
fn default_green_tol() -> f64 {
    1e-2
}
fn default_manufactured_tol() -> f64 {
    5e-2
}
fn default_true() -> bool {
    true
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            densities: default_densities(),
            single_tolerance: default_single_tol(),
            double_tolerance: default_double_tol(),
            green_tolerance: default_green_tol(),
            manufactured_tolerance: default_manufactured_tol(),
            manufactured_suite: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default = "default_problem")]
    pub problem: String,
    /// `[N_x, N_t]` pairs, coarse to fine.
    #[serde(default = "default_levels")]
    pub levels: Vec<[usize; 2]>,
    /// Minimum empirical order accepted on the finest level pair.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

fn default_problem() -> String {
    "ext-neumann".into()
}
fn default_levels() -> Vec<[usize; 2]> {
    vec![[32, 8], [64, 16], [128, 32]]
}
fn default_min_order() -> f64 {
    0.9
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            problem: default_problem(),
            levels: default_levels(),
            min_order: default_min_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    #[serde(default = "default_dimensions")]
    pub dimensions: Vec<usize>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    /// Time integrals run over `[start_fraction · t, t]`.
    #[serde(default = "default_start_fraction")]
    pub start_fraction: f64,
}

fn default_dimensions() -> Vec<usize> {
    vec![2, 3]
}
fn default_times() -> Vec<f64> {
    vec![1.0 / (4.0 * std::f64::consts::PI), 0.01, 0.1, 0.5]
}
fn default_radii() -> Vec<f64> {
    vec![0.0, 0.1, 0.5, 1.0]
}
fn default_start_fraction() -> f64 {
    0.5
}

impl Default for KernelsConfig {
    fn default() -> Self {
        Self {
            dimensions: default_dimensions(),
            times: default_times(),
            radii: default_radii(),
            start_fraction: default_start_fraction(),
        }
    }
}

fn parse_expression(src: &str, field: &str) -> Result<Expression, ConfigError> {
    Expression::parse(src).map_err(|e| ConfigError {
        line: None,
        field: Some(field.into()),
        message: e.to_string(),
    })
}

/// Parses and validates `text`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s.start)),
        field: None,
        message: e.message().trim_end().to_string(),
    })?;
    cfg.validate().map_err(|mut err| {
        if err.line.is_none() {
            err.line = err.field.as_deref().and_then(|f| locate(text, f));
        }
        err
    })?;
    Ok(cfg)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key` inside the table named by the rest of the dotted `field`.
///
/// Handles `[a.b]` headers and `key = ...` lines; inline tables fall back to
/// the line of their parent key.
fn locate(text: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    for split in (1..=parts.len()).rev() {
        let (table, rest) = parts.split_at(split - 1);
        let key = rest[0];
        let table = table.join(".");
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(h) = line.strip_prefix('[') {
                current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
                if split == parts.len() && current == field {
                    return Some(i + 1);
                }
                continue;
            }
            if current == table {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
    }
    None
}

fn range_error(field: &str, message: String) -> ConfigError {
    ConfigError {
        line: None,
        field: Some(field.into()),
        message,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if !(g.horizon.is_finite() && g.horizon > 0.0) {
            return Err(range_error(
                "grid.horizon",
                format!("must be positive, got {}", g.horizon),
            ));
        }
        if !(MIN_NODES..=MAX_NODES).contains(&g.nodes) {
            return Err(range_error(
                "grid.nodes",
                format!("N_x must lie in [{MIN_NODES}, {MAX_NODES}], got {}", g.nodes),
            ));
        }
        if !g.nodes.is_multiple_of(2) {
            return Err(range_error("grid.nodes", format!("N_x must be even, got {}", g.nodes)));
        }
        if !(1..=MAX_STEPS).contains(&g.steps) {
            return Err(range_error(
                "grid.steps",
                format!("N_t must lie in [1, {MAX_STEPS}], got {}", g.steps),
            ));
        }
        let outer = BoundaryCurve::from_shape(self.geometry.outer.clone())
            .map_err(|e| range_error("geometry.outer", e.to_string()))?;
        let inner = BoundaryCurve::from_shape(self.geometry.inner.clone())
            .map_err(|e| range_error("geometry.inner", e.to_string()))?;
        validate_annulus(&outer, &inner).map_err(|e| range_error("geometry.inner", e.to_string()))?;

        match &self.data.neumann {
            NeumannSpec::Zero => {}
            NeumannSpec::Expression { expr } => {
                parse_expression(expr, "data.neumann.expr")?;
            }
        }
        match &self.data.nonlinearity {
            NonlinearitySpec::SinPerturbed { amplitude: v }
            | NonlinearitySpec::Saturating { c: v }
            | NonlinearitySpec::Quadratic { c: v }
                if !v.is_finite() =>
            {
                return Err(range_error(
                    "data.nonlinearity",
                    format!("coefficient must be finite, got {v}"),
                ));
            }
            _ => {}
        }
        let family = self.data.nonlinearity.family()?;
        match &self.data.beta {
            BetaSpec::Constant { value } if !value.is_finite() => {
                return Err(range_error("data.beta.value", format!("must be finite, got {value}")));
            }
            BetaSpec::Expression { expr } => {
                parse_expression(expr, "data.beta.expr")?;
            }
            BetaSpec::Derivative if !matches!(family, Family::Expression(_)) => {
                return Err(range_error(
                    "data.beta",
                    "kind = \"derivative\" needs an expression nonlinearity".into(),
                ));
            }
            _ => {}
        }
        if let Some(b) = self.data.growth {
            if !(b.c_g > 0.0 && b.delta > 0.0 && b.delta < 1.0) {
                return Err(range_error("data.growth", "needs c_g > 0 and delta in (0, 1)".into()));
            }
        }
        self.solver
            .validate()
            .map_err(|e| range_error("solver", e.to_string()))?;
        if self.solver.max_iterations == 0 {
            return Err(range_error("solver.max_iterations", "must be at least 1".into()));
        }
        for p in &self.probes.points {
            if !p.iter().all(|v| v.is_finite()) || p[0] <= 0.0 || p[0] > g.horizon {
                return Err(range_error(
                    "probes.points",
                    format!("probe {p:?} needs finite coordinates and t in (0, T]"),
                ));
            }
        }
        let v = &self.verify;
        if v.densities == 0 {
            return Err(range_error("verify.densities", "must be at least 1".into()));
        }
        for (name, tol) in [
            ("verify.single_tolerance", v.single_tolerance),
            ("verify.double_tolerance", v.double_tolerance),
            ("verify.green_tolerance", v.green_tolerance),
            ("verify.manufactured_tolerance", v.manufactured_tolerance),
        ] {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(range_error(name, format!("must be positive, got {tol}")));
            }
        }
        let c = &self.converge;
        if ManufacturedProblem::from_name(&c.problem).is_none() {
            return Err(range_error(
                "converge.problem",
                format!("unknown problem {:?}", c.problem),
            ));
        }
        if c.levels.len() < 3 {
            return Err(range_error("converge.levels", "needs at least 3 levels".into()));
        }
        for &[nx, nt] in &c.levels {
            if !(MIN_NODES..=MAX_NODES).contains(&nx) || !nx.is_multiple_of(2) || !(1..=MAX_STEPS).contains(&nt) {
                return Err(range_error(
                    "converge.levels",
                    format!(
                        "level [{nx}, {nt}] needs even N_x in [{MIN_NODES}, {MAX_NODES}] and N_t in [1, {MAX_STEPS}]"
                    ),
                ));
            }
        }
        if !c.min_order.is_finite() {
            return Err(range_error("converge.min_order", "must be finite".into()));
        }
        let k = &self.kernels;
        if k.dimensions.is_empty() || k.dimensions.iter().any(|n| !matches!(n, 2 | 3)) {
            return Err(range_error(
                "kernels.dimensions",
                format!("entries must be 2 or 3, got {:?}", k.dimensions),
            ));
        }
        if k.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(range_error("kernels.times", "times must be positive".into()));
        }
        if k.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(range_error("kernels.radii", "radii must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&k.start_fraction) {
            return Err(range_error(
                "kernels.start_fraction",
                format!("must lie in [0, 1), got {}", k.start_fraction),
            ));
        }
        Ok(())
    }

    /// Fails only for values TOML cannot hold, such as seeds above `i64::MAX`.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError {
            line: None,
            field: None,
            message: e.to_string(),
        })
    }

    pub fn outer(&self) -> crate::Result<BoundaryCurve> {
        BoundaryCurve::from_shape(self.geometry.outer.clone())
    }

    pub fn inner(&self) -> crate::Result<BoundaryCurve> {
        BoundaryCurve::from_shape(self.geometry.inner.clone())
    }

    pub fn space_time_grid(&self) -> crate::Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.grid.horizon, self.grid.steps, self.grid.nodes)
    }

    /// `G` is manufactured from the point source when either switch asks for it.
    pub fn is_manufactured(&self) -> bool {
        self.data.manufactured || self.data.nonlinearity == NonlinearitySpec::AffineManufactured
    }

    pub fn beta(&self, grid: &SpaceTimeGrid) -> Result<Density, ConfigError> {
        let params = grid.params();
        Ok(match &self.data.beta {
            BetaSpec::Constant { value } => Density::sample(grid, grid.nodes, |_, _| *value),
            BetaSpec::Expression { expr } => {
                let e = parse_expression(expr, "data.beta.expr")?;
                Density::sample(grid, grid.nodes, |t, j| e.eval(t, 0.0, params[j]))
            }
            BetaSpec::Derivative => match self.data.nonlinearity.family()? {
                Family::Expression(e) => derivative_beta(&e, grid),
                _ => {
                    return Err(range_error(
                        "data.beta",
                        "derivative needs an expression nonlinearity".into(),
                    ))
                }
            },
        })
    }

    /// The configured Neumann datum; ignored for manufactured runs.
    pub fn neumann(&self, grid: &SpaceTimeGrid) -> Result<Density, ConfigError> {
        let params = grid.params();
        Ok(match &self.data.neumann {
            NeumannSpec::Zero => Density::zeros(grid.steps, grid.nodes),
            NeumannSpec::Expression { expr } => {
                let e = parse_expression(expr, "data.neumann.expr")?;
                Density::sample(grid, grid.nodes, |t, j| e.eval(t, 0.0, params[j]))
            }
        })
    }

    pub fn probes(&self) -> Vec<Probe> {
        self.probes
            .points
            .iter()
            .map(|p| Probe::new(p[0], Point::new(p[1], p[2])))
            .collect()
    }
}
