//! Closed-form caloric fields used as manufactured solutions.

use crate::density::Density;
use crate::geometry::{BoundaryMesh, Point, SpaceTimeGrid};
use crate::kernel::{heat_kernel, Dimension};
use crate::potentials::Probe;

/// `u*(t, x) = S_2(t, x - z)`: caloric away from `z`, zero at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    pub center: Point,
}

impl PointSource {
    pub fn new(center: Point) -> Self {
        Self { center }
    }

    pub fn value(&self, t: f64, x: &Point) -> f64 {
        heat_kernel(Dimension::Two, t, (x - self.center).norm_squared())
    }

    pub fn gradient(&self, t: f64, x: &Point) -> Point {
        if t <= 0.0 {
            return Point::zeros();
        }
        let z = x - self.center;
        -z * (self.value(t, x) / (2.0 * t))
    }

    /// Boundary values at the collocation lattice.
    pub fn trace(&self, mesh: &BoundaryMesh, grid: &SpaceTimeGrid) -> Density {
        Density::sample(grid, mesh.len(), |t, j| self.value(t, &mesh.points[j]))
    }

    /// `ν·∇u*` at the collocation lattice.
    pub fn normal_trace(&self, mesh: &BoundaryMesh, grid: &SpaceTimeGrid) -> Density {
        Density::sample(grid, mesh.len(), |t, j| {
            self.gradient(t, &mesh.points[j]).dot(&mesh.normals[j])
        })
    }

    pub fn values(&self, probes: &[Probe]) -> Vec<f64> {
        probes.iter().map(|p| self.value(p.t, &p.x)).collect()
    }
}

/// Largest pointwise relative error `|u - u*| / |u*|` over the probes.
pub fn max_relative_error(computed: &[f64], exact: &[f64]) -> f64 {
    computed
        .iter()
        .zip(exact)
        .map(|(c, e)| (c - e).abs() / e.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
