//! Space-time boundary integral solver for the heat equation.
//!
//! The crate discretizes single and double layer heat potentials on smooth
//! closed planar curves, solves the classical second-kind (and first-kind)
//! boundary integral equations by time marching, and solves the nonlinear
//! mixed Neumann/Robin problem in a perforated domain `Ω \ ω̄` by a damped
//! fixed-point iteration on the pair of layer densities.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bie;
pub mod config;
pub mod density;
pub mod dump;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod kernel;
pub mod manufactured;
pub mod nonlinear;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod special;
pub mod verify;

pub use density::Density;
pub use error::{Error, Result};
pub use geometry::{BoundaryCurve, BoundaryMesh, Point, SpaceTimeGrid};
