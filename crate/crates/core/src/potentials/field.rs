//! Off-boundary evaluation of the single and double layer potentials.
//!
//! The density is piecewise constant in time, so each cell contributes an
//! exact elapsed-time integral of the kernel. In space the trapezoid rule is
//! used, on a trigonometrically upsampled copy of the boundary whenever the
//! kernel is sharper than the mesh (probe close to the curve and a window
//! starting at zero elapsed time). None of this touches the assembled
//! boundary operators, so it doubles as an independent oracle for them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMesh, Point, SpaceTimeGrid};
use crate::kernel::{slab_gradient_factor, slab_hessian_factor, slab_value, Dimension};

/// Nodes per kernel width the spatial rule aims for.
const NODES_PER_WIDTH: f64 = 4.0;
const MAX_REFINEMENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub t: f64,
    pub x: Point,
}

impl Probe {
    pub fn new(t: f64, x: Point) -> Self {
        Self { t, x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Single,
    Double,
}

/// Trigonometric interpolation of periodic samples onto `factor` times as many nodes.
pub fn upsample_periodic(values: &[f64], factor: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = values.len();
    if factor == 1 {
        return values.to_vec();
    }
    let m = n * factor;
    let mut spec: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut fine = vec![Complex::new(0.0, 0.0); m];
    let half = n / 2;
    fine[..half].copy_from_slice(&spec[..half]);
    for k in half + 1..n {
        fine[m - n + k] = spec[k];
    }
    // Split the Nyquist mode symmetrically to keep the interpolant real.
    fine[half] = spec[half] * 0.5;
    fine[m - half] = spec[half] * 0.5;
    planner.plan_fft_inverse(m).process(&mut fine);
    fine.iter().map(|c| c.re / n as f64).collect()
}

struct Refined {
    mesh: Arc<BoundaryMesh>,
    /// Upsampled density rows, indexed by lattice row.
    rows: Vec<Vec<f64>>,
}

/// A layer potential `v[μ]` or `w[μ]` ready for evaluation at probes.
pub struct LayerPotential<'a> {
    mesh: &'a BoundaryMesh,
    grid: SpaceTimeGrid,
    density: &'a Density,
    layer: Layer,
}

impl<'a> LayerPotential<'a> {
    pub fn new(mesh: &'a BoundaryMesh, grid: &SpaceTimeGrid, density: &'a Density, layer: Layer) -> Result<Self> {
        if density.nodes() != mesh.len() || density.steps() != grid.steps {
            return Err(Error::InvalidInput(format!(
                "density is {}x{}, expected {}x{}",
                density.steps(),
                density.nodes(),
                grid.steps,
                mesh.len()
            )));
        }
        Ok(Self {
            mesh,
            grid: *grid,
            density,
            layer,
        })
    }

    fn refinement(&self, distance: f64, window_start: f64) -> usize {
        let width = (distance * distance + 4.0 * window_start).sqrt();
        let wanted = (NODES_PER_WIDTH * self.mesh.max_spacing() / width).ceil();
        let mut factor = 1;
        while (factor as f64) < wanted && factor < MAX_REFINEMENT {
            factor *= 2;
        }
        factor
    }

    /// `(row, window start, window end)` for every cell seen by a probe at time `t`.
    fn windows(&self, t: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for k in 1..=self.grid.steps {
            let (t0, t1) = self.grid.cell(k);
            if t <= t0 {
                break;
            }
            out.push((k, t - t1.min(t), t - t0));
        }
        out
    }

    fn prepare(&self, probes: &[Probe]) -> Result<(Vec<f64>, BTreeMap<usize, Refined>)> {
        let curve = self.mesh.curve();
        let scale = curve.extent();
        let mut distances = Vec::with_capacity(probes.len());
        for p in probes {
            if !(p.t.is_finite() && p.x.iter().all(|v| v.is_finite())) {
                return Err(Error::InvalidInput("probe coordinates must be finite".into()));
            }
            if p.t < 0.0 || p.t > self.grid.horizon * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "probe time {} outside [0, {}]",
                    p.t, self.grid.horizon
                )));
            }
            let d = curve.distance_to(&p.x);
            if d <= 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "probe ({}, {}) lies on the boundary; use the boundary operators for traces",
                    p.x.x, p.x.y
                )));
            }
            distances.push(d);
        }
        let mut factors = BTreeMap::new();
        for (p, &d) in probes.iter().zip(&distances) {
            for (_, a, _) in self.windows(p.t) {
                let f = self.refinement(d, a);
                if f > 1 {
                    factors.insert(f, ());
                }
            }
        }
        let mut planner = FftPlanner::new();
        let mut cache = BTreeMap::new();
        for &f in factors.keys() {
            let mesh = Arc::new(BoundaryMesh::new(curve, self.mesh.len() * f)?);
            let rows = (0..=self.grid.steps)
                .map(|k| upsample_periodic(self.density.row(k), f, &mut planner))
                .collect();
            cache.insert(f, Refined { mesh, rows });
        }
        Ok((distances, cache))
    }

    fn accumulate<T, K>(&self, probe: &Probe, distance: f64, cache: &BTreeMap<usize, Refined>, kernel: &K) -> T
    where
        T: Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
        K: Fn(&BoundaryMesh, usize, &Point, f64, f64) -> T,
    {
        let mut total = T::default();
        for (k, a, b) in self.windows(probe.t) {
            let f = self.refinement(distance, a);
            let (mesh, row): (&BoundaryMesh, &[f64]) = if f == 1 {
                (self.mesh, self.density.row(k))
            } else {
                let r = &cache[&f];
                (&r.mesh, &r.rows[k])
            };
            for (j, &mu) in row.iter().enumerate() {
                if mu == 0.0 {
                    continue;
                }
                let z = probe.x - mesh.points[j];
                total += kernel(mesh, j, &z, a, b) * (mu * mesh.weight(j));
            }
        }
        total
    }

    pub fn values(&self, probes: &[Probe]) -> Result<Vec<f64>> {
        let (distances, cache) = self.prepare(probes)?;
        let layer = self.layer;
        let kernel = move |mesh: &BoundaryMesh, j: usize, z: &Point, a: f64, b: f64| -> f64 {
            let r = z.norm();
            match layer {
                Layer::Single => slab_value(Dimension::Two, r, a, b),
                Layer::Double => z.dot(&mesh.normals[j]) * slab_gradient_factor(Dimension::Two, r, a, b),
            }
        };
        Ok(probes
            .par_iter()
            .zip(distances.par_iter())
            .map(|(p, &d)| self.accumulate(p, d, &cache, &kernel))
            .collect())
    }

    /// Spatial gradients of the potential at the probes.
    pub fn gradients(&self, probes: &[Probe]) -> Result<Vec<Point>> {
        let (distances, cache) = self.prepare(probes)?;
        let layer = self.layer;
        let kernel = move |mesh: &BoundaryMesh, j: usize, z: &Point, a: f64, b: f64| -> GradAcc {
            let r = z.norm();
            let g = slab_gradient_factor(Dimension::Two, r, a, b);
            GradAcc(match layer {
                Layer::Single => -z * g,
                Layer::Double => {
                    let nu = &mesh.normals[j];
                    let q = slab_hessian_factor(Dimension::Two, r, a, b);
                    nu * g - z * (z.dot(nu) * q)
                }
            })
        };
        Ok(probes
            .par_iter()
            .zip(distances.par_iter())
            .map(|(p, &d)| self.accumulate(p, d, &cache, &kernel).0)
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct GradAcc(Point);

impl Default for GradAcc {
    fn default() -> Self {
        GradAcc(Point::zeros())
    }
}

impl std::ops::AddAssign for GradAcc {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl std::ops::Mul<f64> for GradAcc {
    type Output = GradAcc;
    fn mul(self, rhs: f64) -> GradAcc {
        GradAcc(self.0 * rhs)
    }
}

/// `v[μ]` at off-boundary probes.
pub fn eval_single_layer(
    mesh: &BoundaryMesh,
    grid: &SpaceTimeGrid,
    density: &Density,
    probes: &[Probe],
) -> Result<Vec<f64>> {
    LayerPotential::new(mesh, grid, density, Layer::Single)?.values(probes)
}

/// `w[μ]` at off-boundary probes.
pub fn eval_double_layer(
    mesh: &BoundaryMesh,
    grid: &SpaceTimeGrid,
    density: &Density,
    probes: &[Probe],
) -> Result<Vec<f64>> {
    LayerPotential::new(mesh, grid, density, Layer::Double)?.values(probes)
}
