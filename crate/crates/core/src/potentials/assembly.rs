//! Nyström discretization of the boundary operators.
//!
//! Time: densities are piecewise constant on cells and the kernel is
//! integrated exactly over each elapsed-time window. Space: periodic
//! trapezoid rule on the uniform parameter nodes. The same-time block of `V`
//! has a logarithmic singularity, handled by splitting off `-(1/4π) ln r²`
//! and integrating it with the periodic-log product rule; the double-layer
//! kernels are bounded and take their curvature limit on the diagonal.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::operator::{BlockOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::geometry::{curve_separation, BoundaryMesh, SpaceTimeGrid};
use crate::kernel::{slab_gradient_factor, slab_value, slab_value_at_origin_2d, Dimension};
use crate::special::{ein, EULER_GAMMA};

const FOUR_PI: f64 = 4.0 * PI;

/// Product weights `R_k` with
/// `∫_0^{2π} ln(4 sin²((θ_i - φ)/2)) f(φ) dφ ≈ Σ_j R_{(i-j) mod N} f(θ_j)`,
/// exact for trigonometric polynomials of degree below `N/2`.
pub fn periodic_log_weights(nodes: usize) -> Vec<f64> {
    let n = nodes / 2;
    let nf = n as f64;
    (0..nodes)
        .map(|k| {
            let d = TAU * k as f64 / nodes as f64;
            let mut s = 0.0;
            for m in 1..n {
                s += (m as f64 * d).cos() / m as f64;
            }
            -(TAU / nf) * s - (PI / (nf * nf)) * (nf * d).cos()
        })
        .collect()
}

fn assemble_lags<F>(grid: &SpaceTimeGrid, kind: OperatorKind, block: F) -> Result<BlockOperator>
where
    F: Fn(usize, f64, f64) -> DMatrix<f64> + Sync,
{
    let blocks: Vec<DMatrix<f64>> = (0..grid.steps)
        .into_par_iter()
        .map(|lag| {
            let (a, b) = grid.lag_window(lag);
            block(lag, a, b)
        })
        .collect();
    BlockOperator::new(kind, blocks)
}

/// Single layer operator `V` on one boundary.
pub fn assemble_v(mesh: &BoundaryMesh, grid: &SpaceTimeGrid) -> Result<BlockOperator> {
    let n = mesh.len();
    let dtheta = mesh.parameter_step();
    let log_weights = periodic_log_weights(n);
    assemble_lags(grid, OperatorKind::SingleLayer, |lag, a, b| {
        let mut m = DMatrix::zeros(n, n);
        if lag == 0 {
            // (1/4π) E1(r²/4b) = -(1/4π) ln r² + (1/4π)(-γ + ln 4b + Ein(r²/4b))
            let constant = (-EULER_GAMMA + (4.0 * b).ln()) / FOUR_PI;
            for i in 0..n {
                for j in 0..n {
                    let sj = mesh.speeds[j];
                    let log_part = -log_weights[(i + n - j) % n] / FOUR_PI;
                    let smooth = if i == j {
                        -(sj * sj).ln() / FOUR_PI + constant
                    } else {
                        let r2 = (mesh.points[i] - mesh.points[j]).norm_squared();
                        let half = 0.5 * (mesh.params[i] - mesh.params[j]);
                        let s2 = 4.0 * half.sin().powi(2);
                        -(r2 / s2).ln() / FOUR_PI + constant + ein(r2 / (4.0 * b)) / FOUR_PI
                    };
                    m[(i, j)] = sj * (log_part + dtheta * smooth);
                }
            }
        } else {
            let diag = slab_value_at_origin_2d(a, b);
            for i in 0..n {
                for j in 0..n {
                    let k = if i == j {
                        diag
                    } else {
                        slab_value(Dimension::Two, (mesh.points[i] - mesh.points[j]).norm(), a, b)
                    };
                    m[(i, j)] = dtheta * mesh.speeds[j] * k;
                }
            }
        }
        m
    })
}

fn assemble_double_layer_like(mesh: &BoundaryMesh, grid: &SpaceTimeGrid, kind: OperatorKind) -> Result<BlockOperator> {
    let n = mesh.len();
    let dtheta = mesh.parameter_step();
    let adjoint = kind == OperatorKind::AdjointDoubleLayer;
    assemble_lags(grid, kind, |lag, a, b| {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let k = if i == j {
                    // Limit of ±(x-y)·ν g as y -> x; the heat factor tends to 1
                    // on the same-time window and to 0 otherwise.
                    if lag == 0 {
                        mesh.curvature_term[i] / FOUR_PI
                    } else {
                        0.0
                    }
                } else {
                    let z = mesh.points[i] - mesh.points[j];
                    let proj = if adjoint {
                        -z.dot(&mesh.normals[i])
                    } else {
                        z.dot(&mesh.normals[j])
                    };
                    proj * slab_gradient_factor(Dimension::Two, z.norm(), a, b)
                };
                m[(i, j)] = dtheta * mesh.speeds[j] * k;
            }
        }
        m
    })
}

/// Double layer operator `W` (normal derivative at the source point).
pub fn assemble_w(mesh: &BoundaryMesh, grid: &SpaceTimeGrid) -> Result<BlockOperator> {
    assemble_double_layer_like(mesh, grid, OperatorKind::DoubleLayer)
}

/// Adjoint double layer operator `W*` (normal derivative at the target point).
pub fn assemble_w_star(mesh: &BoundaryMesh, grid: &SpaceTimeGrid) -> Result<BlockOperator> {
    assemble_double_layer_like(mesh, grid, OperatorKind::AdjointDoubleLayer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossKind {
    Value,
    NormalDerivative,
}

/// Single layer on `source` evaluated (or normally differentiated) on a disjoint `target`.
pub fn assemble_cross(
    source: &BoundaryMesh,
    target: &BoundaryMesh,
    grid: &SpaceTimeGrid,
    kind: CrossKind,
) -> Result<BlockOperator> {
    let separation = curve_separation(source.curve(), target.curve());
    if !(separation > 1e-10) {
        return Err(Error::Geometry(format!(
            "cross-boundary operator needs disjoint boundaries (separation {separation:e})"
        )));
    }
    let (nt, ns) = (target.len(), source.len());
    let dtheta = source.parameter_step();
    let op_kind = match kind {
        CrossKind::Value => OperatorKind::CrossValue,
        CrossKind::NormalDerivative => OperatorKind::CrossNormalDerivative,
    };
    assemble_lags(grid, op_kind, |_, a, b| {
        let mut m = DMatrix::zeros(nt, ns);
        for i in 0..nt {
            for j in 0..ns {
                let z = target.points[i] - source.points[j];
                let r = z.norm();
                let k = match kind {
                    CrossKind::Value => slab_value(Dimension::Two, r, a, b),
                    CrossKind::NormalDerivative => {
                        -z.dot(&target.normals[i]) * slab_gradient_factor(Dimension::Two, r, a, b)
                    }
                };
                m[(i, j)] = dtheta * source.speeds[j] * k;
            }
        }
        m
    })
}
