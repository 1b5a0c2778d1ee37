use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `V`: trace of the single layer potential.
    SingleLayer,
    /// `W`: kernel `∂S/∂ν(y)`.
    DoubleLayer,
    /// `W*`: kernel `∂S/∂ν(x)`.
    AdjointDoubleLayer,
    /// Single layer from one boundary evaluated on another.
    CrossValue,
    /// Normal derivative (target normal) of the single layer on another boundary.
    CrossNormalDerivative,
}

impl OperatorKind {
    pub fn code(self) -> u8 {
        match self {
            OperatorKind::SingleLayer => 0,
            OperatorKind::DoubleLayer => 1,
            OperatorKind::AdjointDoubleLayer => 2,
            OperatorKind::CrossValue => 3,
            OperatorKind::CrossNormalDerivative => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => OperatorKind::SingleLayer,
            1 => OperatorKind::DoubleLayer,
            2 => OperatorKind::AdjointDoubleLayer,
            3 => OperatorKind::CrossValue,
            4 => OperatorKind::CrossNormalDerivative,
            _ => return None,
        })
    }
}

/// Causal block-Toeplitz operator: output row `m` is
/// `Σ_{lag=0}^{m-1} blocks[lag] · input row (m - lag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    kind: OperatorKind,
    targets: usize,
    sources: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockOperator {
    pub fn new(kind: OperatorKind, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidInput("block operator needs at least one block".into()));
        };
        let (targets, sources) = first.shape();
        if blocks.iter().any(|b| b.shape() != (targets, sources)) {
            return Err(Error::InvalidInput("blocks have inconsistent shapes".into()));
        }
        Ok(Self {
            kind,
            targets,
            sources,
            blocks,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    /// Number of distinct time lags stored.
    pub fn lags(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, lag: usize) -> &DMatrix<f64> {
        &self.blocks[lag]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    fn check_input(&self, density: &Density) {
        assert_eq!(density.nodes(), self.sources, "density lives on a different boundary");
        assert!(
            density.steps() <= self.blocks.len(),
            "density has {} steps, operator only {} lags",
            density.steps(),
            self.blocks.len()
        );
    }

    /// `Σ_{lag=from}^{m-1} A_lag μ_{m-lag}`.
    fn partial_row(&self, density: &Density, m: usize, from: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(self.targets);
        for lag in from..m {
            let src = DVectorView::from_slice(density.row(m - lag), self.sources);
            acc.gemv(1.0, &self.blocks[lag], &src, 1.0);
        }
        acc
    }

    /// Contribution of rows strictly before `m` to output row `m`.
    pub fn history(&self, density: &Density, m: usize) -> DVector<f64> {
        self.check_input(density);
        self.partial_row(density, m, 1)
    }

    pub fn apply_row(&self, density: &Density, m: usize) -> DVector<f64> {
        self.check_input(density);
        self.partial_row(density, m, 0)
    }

    pub fn apply(&self, density: &Density) -> Density {
        self.check_input(density);
        let steps = density.steps();
        let rows: Vec<DVector<f64>> = (1..=steps)
            .into_par_iter()
            .map(|m| self.partial_row(density, m, 0))
            .collect();
        let mut out = Density::zeros(steps, self.targets);
        for (m, row) in rows.iter().enumerate() {
            out.set_row(m + 1, row.as_slice());
        }
        out
    }
}
