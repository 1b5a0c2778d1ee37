//! Boundary curves, their uniform-parameter samplings, and the space-time lattice.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Segments of the polyline used for point-in-region tests.
pub const POLYLINE_SEGMENTS: usize = 4096;

/// Analytic description of a smooth closed curve, parametrized on `[0, 2π)`
/// counterclockwise so that `(γ'_y, -γ'_x)/|γ'|` is the outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveShape {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Polar graph `r(θ) = radius + amplitude * cos(lobes * θ)` around `center`.
    Star {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    shape: CurveShape,
}

impl BoundaryCurve {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        Self::from_shape(CurveShape::Circle {
            center: [center.x, center.y],
            radius,
        })
    }

    pub fn star(center: Point, radius: f64, amplitude: f64, lobes: u32) -> Result<Self> {
        Self::from_shape(CurveShape::Star {
            center: [center.x, center.y],
            radius,
            amplitude,
            lobes,
        })
    }

    pub fn from_shape(shape: CurveShape) -> Result<Self> {
        match &shape {
            CurveShape::Circle { center, radius } => {
                check_finite_point(center)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Geometry(format!("circle radius must be positive, got {radius}")));
                }
            }
            CurveShape::Star {
                center,
                radius,
                amplitude,
                ..
            } => {
                check_finite_point(center)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Geometry(format!(
                        "star base radius must be positive, got {radius}"
                    )));
                }
                if !(amplitude.is_finite() && *amplitude >= 0.0 && amplitude < radius) {
                    return Err(Error::Geometry(format!(
                        "star wobble amplitude must satisfy 0 <= a < R (a = {amplitude}, R = {radius})"
                    )));
                }
            }
        }
        Ok(Self { shape })
    }

    pub fn shape(&self) -> &CurveShape {
        &self.shape
    }

    pub fn center(&self) -> Point {
        match self.shape {
            CurveShape::Circle { center, .. } | CurveShape::Star { center, .. } => Point::new(center[0], center[1]),
        }
    }

    /// Polar radius and its first two derivatives.
    fn polar(&self, theta: f64) -> (f64, f64, f64) {
        match self.shape {
            CurveShape::Circle { radius, .. } => (radius, 0.0, 0.0),
            CurveShape::Star {
                radius,
                amplitude,
                lobes,
                ..
            } => {
                let k = lobes as f64;
                let (s, c) = (k * theta).sin_cos();
                (radius + amplitude * c, -amplitude * k * s, -amplitude * k * k * c)
            }
        }
    }

    pub fn position(&self, theta: f64) -> Point {
        let (r, _, _) = self.polar(theta);
        let (s, c) = theta.sin_cos();
        self.center() + Point::new(r * c, r * s)
    }

    /// γ'(θ).
    pub fn derivative(&self, theta: f64) -> Point {
        let (r, dr, _) = self.polar(theta);
        let (s, c) = theta.sin_cos();
        Point::new(dr * c - r * s, dr * s + r * c)
    }

    /// γ''(θ).
    pub fn second_derivative(&self, theta: f64) -> Point {
        let (r, dr, ddr) = self.polar(theta);
        let (s, c) = theta.sin_cos();
        Point::new(ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s)
    }

    pub fn speed(&self, theta: f64) -> f64 {
        self.derivative(theta).norm()
    }

    pub fn normal(&self, theta: f64) -> Point {
        let d = self.derivative(theta);
        Point::new(d.y, -d.x) / d.norm()
    }

    /// Periodic trapezoid approximation of the curve length.
    pub fn arclength(&self, nodes: usize) -> f64 {
        let h = TAU / nodes as f64;
        (0..nodes).map(|j| self.speed(j as f64 * h)).sum::<f64>() * h
    }

    pub fn polyline(&self, segments: usize) -> Vec<Point> {
        let h = TAU / segments as f64;
        (0..segments).map(|j| self.position(j as f64 * h)).collect()
    }

    /// Rough diameter: the largest distance of a polyline vertex from the center, doubled.
    pub fn extent(&self) -> f64 {
        let c = self.center();
        2.0 * self.polyline(256).iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
    }

    /// Distance from `p` to the curve: coarse sampling, then golden-section refinement.
    pub fn distance_to(&self, p: &Point) -> f64 {
        let n = 1024;
        let h = TAU / n as f64;
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for j in 0..n {
            let t = j as f64 * h;
            let d = (self.position(t) - p).norm_squared();
            if d < best {
                best = d;
                arg = t;
            }
        }
        let t = golden_min(|t| (self.position(t) - p).norm_squared(), arg - h, arg + h);
        (self.position(t) - p).norm().min(best.sqrt())
    }

    /// Winding-number test against the 4096-segment polyline.
    pub fn contains(&self, p: &Point) -> bool {
        winding_number(&self.polyline(POLYLINE_SEGMENTS), p) != 0
    }

    /// Checks the sampled curve invariants: positive speed, unit normals and
    /// the outward orientation of the normal.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let poly = self.polyline(POLYLINE_SEGMENTS);
        let eps = 1e-4 * self.extent();
        let h = TAU / samples as f64;
        for j in 0..samples {
            let theta = j as f64 * h;
            let speed = self.speed(theta);
            if !(speed > 0.0) {
                return Err(Error::Geometry(format!("zero speed at θ = {theta}")));
            }
            let nu = self.normal(theta);
            if (nu.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Geometry(format!("normal not unit length at θ = {theta}")));
            }
            let x = self.position(theta);
            if winding_number(&poly, &(x + eps * nu)) != 0 || winding_number(&poly, &(x - eps * nu)) == 0 {
                return Err(Error::Geometry(format!(
                    "normal at θ = {theta} does not point out of the enclosed region"
                )));
            }
        }
        Ok(())
    }
}

fn check_finite_point(c: &[f64; 2]) -> Result<()> {
    if c.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Geometry("curve center must be finite".into()))
    }
}

fn is_left(a: &Point, b: &Point, p: &Point) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)
}

pub fn winding_number(poly: &[Point], p: &Point) -> i32 {
    let mut wn = 0;
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        if a.y <= p.y {
            if b.y > p.y && is_left(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && is_left(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Outcome of [`validate_annulus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusReport {
    /// Minimum distance between the two boundaries.
    pub separation: f64,
}

/// Minimum distance between two curves: brute force on 4096-point samplings,
/// then alternating golden-section refinement around the closest pair.
pub fn curve_separation(a: &BoundaryCurve, b: &BoundaryCurve) -> f64 {
    let n = POLYLINE_SEGMENTS;
    let pa = a.polyline(n);
    let pb = b.polyline(n);
    let (mut best, mut ia, mut ib) = (f64::INFINITY, 0, 0);
    for (i, p) in pa.iter().enumerate() {
        for (j, q) in pb.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best {
                best = d;
                ia = i;
                ib = j;
            }
        }
    }
    let h = TAU / n as f64;
    let (mut ta, mut tb) = (ia as f64 * h, ib as f64 * h);
    for _ in 0..4 {
        let qb = b.position(tb);
        ta = golden_min(|t| (a.position(t) - qb).norm_squared(), ta - h, ta + h);
        let qa = a.position(ta);
        tb = golden_min(|t| (b.position(t) - qa).norm_squared(), tb - h, tb + h);
    }
    let refined = (a.position(ta) - b.position(tb)).norm();
    refined.min(best.sqrt())
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Confirms `inner` lies strictly inside `outer` with positive separation.
pub fn validate_annulus(outer: &BoundaryCurve, inner: &BoundaryCurve) -> Result<AnnulusReport> {
    let outer_poly = outer.polyline(POLYLINE_SEGMENTS);
    let inner_poly = inner.polyline(POLYLINE_SEGMENTS);
    if let Some(p) = inner_poly.iter().find(|p| winding_number(&outer_poly, p) == 0) {
        return Err(Error::Geometry(format!(
            "inner boundary point ({:.6}, {:.6}) is not inside the outer boundary",
            p.x, p.y
        )));
    }
    if let Some(p) = outer_poly.iter().find(|p| winding_number(&inner_poly, p) != 0) {
        return Err(Error::Geometry(format!(
            "outer boundary point ({:.6}, {:.6}) lies inside the inner boundary",
            p.x, p.y
        )));
    }
    let separation = curve_separation(outer, inner);
    if !(separation > 1e-10) {
        return Err(Error::Geometry(format!("boundaries touch (separation {separation:e})")));
    }
    Ok(AnnulusReport { separation })
}

/// Uniform time lattice on `[0, T]` with a per-boundary node count.
///
/// Densities are piecewise constant on the cells `(t_{k-1}, t_k]` and are
/// collocated at the cell midpoints; lattice row `m >= 1` holds the value on
/// cell `m`, row 0 is the (zero) initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub nodes: usize,
}

impl SpaceTimeGrid {
    pub fn new(horizon: f64, steps: usize, nodes: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 1 {
            return Err(Error::InvalidInput("time step count must be at least 1".into()));
        }
        check_node_count(nodes)?;
        Ok(Self { horizon, steps, nodes })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Collocation time of lattice row `m`.
    pub fn time(&self, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            (m as f64 - 0.5) * self.step()
        }
    }

    /// Cell `(t_{k-1}, t_k]` carrying lattice row `k >= 1`.
    pub fn cell(&self, k: usize) -> (f64, f64) {
        let h = self.step();
        ((k - 1) as f64 * h, k as f64 * h)
    }

    /// Elapsed-time window `[a, b]` seen by row `m` from the cell of row `m - lag`.
    pub fn lag_window(&self, lag: usize) -> (f64, f64) {
        let h = self.step();
        let a = if lag == 0 { 0.0 } else { (lag as f64 - 0.5) * h };
        (a, (lag as f64 + 0.5) * h)
    }

    pub fn params(&self) -> Vec<f64> {
        parameter_nodes(self.nodes)
    }
}

pub(crate) fn check_node_count(nodes: usize) -> Result<()> {
    if nodes < 8 || !nodes.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "boundary node count must be even and at least 8, got {nodes}"
        )));
    }
    Ok(())
}

pub fn parameter_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

/// A curve sampled at `θ_j = 2πj/N` with everything the quadratures need.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    curve: BoundaryCurve,
    pub params: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub speeds: Vec<f64>,
    /// `γ''·ν / |γ'|²`, the signed curvature with the outward-normal convention (−κ).
    pub curvature_term: Vec<f64>,
}

impl BoundaryMesh {
    pub fn new(curve: &BoundaryCurve, nodes: usize) -> Result<Self> {
        check_node_count(nodes)?;
        let params = parameter_nodes(nodes);
        let points = params.iter().map(|&t| curve.position(t)).collect();
        let normals: Vec<Point> = params.iter().map(|&t| curve.normal(t)).collect();
        let speeds: Vec<f64> = params.iter().map(|&t| curve.speed(t)).collect();
        let curvature_term = params
            .iter()
            .zip(normals.iter().zip(&speeds))
            .map(|(&t, (nu, s))| curve.second_derivative(t).dot(nu) / (s * s))
            .collect();
        Ok(Self {
            curve: curve.clone(),
            params,
            points,
            normals,
            speeds,
            curvature_term,
        })
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn parameter_step(&self) -> f64 {
        TAU / self.len() as f64
    }

    /// Trapezoid weight `(2π/N)|γ'(θ_j)|`.
    pub fn weight(&self, j: usize) -> f64 {
        self.parameter_step() * self.speeds[j]
    }

    /// Largest spacing between consecutive nodes measured along the curve.
    pub fn max_spacing(&self) -> f64 {
        self.speeds.iter().fold(0.0, |m, &s| f64::max(m, s)) * self.parameter_step()
    }
}

/// Average node spacing `L/N`, the natural mesh width of a sampled curve.
pub fn mean_spacing(curve: &BoundaryCurve, nodes: usize) -> f64 {
    curve.arclength(nodes.max(64)) / nodes as f64
}
