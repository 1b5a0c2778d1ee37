//! Discrete layer heat potentials: boundary operators and field evaluation.

mod assembly;
mod field;
mod operator;

pub use assembly::{assemble_cross, assemble_v, assemble_w, assemble_w_star, periodic_log_weights, CrossKind};
pub use field::{eval_double_layer, eval_single_layer, upsample_periodic, Layer, LayerPotential, Probe};
pub use operator::{BlockOperator, OperatorKind};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::geometry::{curve_separation, BoundaryMesh, SpaceTimeGrid};

/// Which side of a boundary a one-sided limit is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The bounded region enclosed by the curve (`+`).
    Interior,
    /// The unbounded complement (`-`).
    Exterior,
}

impl Side {
    /// `+1` for the interior, `-1` for the exterior.
    pub fn sign(self) -> f64 {
        match self {
            Side::Interior => 1.0,
            Side::Exterior => -1.0,
        }
    }
}

/// Adds `shift · μ` to an operator output.
pub fn shifted(op_output: &Density, shift: f64, density: &Density) -> Density {
    let mut out = op_output.clone();
    out.axpy(shift, density);
    out
}

/// Normal derivative of `v[μ]` (source boundary) on `target`.
///
/// On the source boundary itself this is the one-sided limit
/// `±½μ + W*μ` from `side`; on a disjoint boundary the kernel is smooth and
/// `side` is irrelevant.
pub fn eval_normal_derivative_single_layer(
    source: &BoundaryMesh,
    grid: &SpaceTimeGrid,
    density: &Density,
    target: &BoundaryMesh,
    side: Side,
) -> Result<Density> {
    if source.curve() == target.curve() {
        if source.len() != target.len() {
            return Err(Error::InvalidInput(
                "same-boundary normal derivative needs identical node sets".into(),
            ));
        }
        let w_star = assemble_w_star(source, grid)?;
        return Ok(shifted(&w_star.apply(density), 0.5 * side.sign(), density));
    }
    let separation = curve_separation(source.curve(), target.curve());
    if !(separation > 1e-10) {
        return Err(Error::Geometry(format!(
            "source and target boundaries overlap (separation {separation:e})"
        )));
    }
    Ok(assemble_cross(source, target, grid, CrossKind::NormalDerivative)?.apply(density))
}
