use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SpaceTimeGrid;

/// Boundary density on the `(time row, boundary node)` lattice.
///
/// Row 0 is the initial state and is identically zero; every constructor and
/// mutator preserves that.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    steps: usize,
    nodes: usize,
    values: Vec<f64>,
}

impl Density {
    pub fn zeros(steps: usize, nodes: usize) -> Self {
        Self {
            steps,
            nodes,
            values: vec![0.0; (steps + 1) * nodes],
        }
    }

    pub fn zeros_like(other: &Density) -> Self {
        Self::zeros(other.steps, other.nodes)
    }

    /// Fills rows `1..=steps` from `f(row, node)`.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(steps: usize, nodes: usize, mut f: F) -> Self {
        let mut d = Self::zeros(steps, nodes);
        for m in 1..=steps {
            for j in 0..nodes {
                d.values[m * nodes + j] = f(m, j);
            }
        }
        d
    }

    /// Samples `f(t, node)` at the collocation times of `grid`.
    pub fn sample<F: FnMut(f64, usize) -> f64>(grid: &SpaceTimeGrid, nodes: usize, mut f: F) -> Self {
        Self::from_fn(grid.steps, nodes, |m, j| f(grid.time(m), j))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidInput("density needs at least one row".into()));
        };
        let nodes = first.len();
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::InvalidInput("density rows have unequal lengths".into()));
        }
        if first.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput("density row 0 (t = 0) must be zero".into()));
        }
        Ok(Self {
            steps: rows.len() - 1,
            nodes,
            values: rows.concat(),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.nodes..(m + 1) * self.nodes]
    }

    /// Overwrites row `m`; row 0 is immutable.
    pub fn set_row(&mut self, m: usize, row: &[f64]) {
        assert!(m >= 1, "row 0 of a density is fixed at zero");
        self.values[m * self.nodes..(m + 1) * self.nodes].copy_from_slice(row);
    }

    pub fn get(&self, m: usize, j: usize) -> f64 {
        self.values[m * self.nodes + j]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Root-mean-square over the rows `1..=steps`.
    pub fn rms(&self) -> f64 {
        let count = self.steps * self.nodes;
        if count == 0 {
            return 0.0;
        }
        (self.values[self.nodes..].iter().map(|v| v * v).sum::<f64>() / count as f64).sqrt()
    }

    pub fn same_shape(&self, other: &Density) -> bool {
        self.steps == other.steps && self.nodes == other.nodes
    }

    fn check_shape(&self, other: &Density) {
        assert!(
            self.same_shape(other),
            "density shapes differ: {}x{} vs {}x{}",
            self.steps,
            self.nodes,
            other.steps,
            other.nodes
        );
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Density) {
        self.check_shape(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Density {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn difference(&self, other: &Density) -> Density {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Pointwise product of two lattices of equal shape.
    pub fn hadamard(&self, other: &Density) -> Density {
        self.check_shape(other);
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a *= b;
        }
        out
    }

    /// Copy with rows after `m` set to zero.
    pub fn truncated_after(&self, m: usize) -> Density {
        let mut out = self.clone();
        let start = ((m + 1) * self.nodes).min(out.values.len());
        out.values[start..].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// First non-finite entry, if any, as `(row, node, value)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize, f64)> {
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| (i / self.nodes, i % self.nodes, self.values[i]))
    }
}
