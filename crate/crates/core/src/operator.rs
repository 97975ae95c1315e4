//! Linear sensing operators used by the iterative solvers.
//!
//! The level-stacked operator applies `Phi'` without materializing it: every
//! block row shares the same `Phi`, so one product with `Phi` (or its
//! transpose) serves all `L + 1` blocks.

use nalgebra::{DMatrix, DVectorView};

pub trait SensingOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `A x`
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// `A^T r`
    fn apply_adjoint(&self, r: &[f64]) -> Vec<f64>;
}

/// A dense matrix used as-is.
#[derive(Debug, Clone, Copy)]
pub struct DenseOperator<'a>(pub &'a DMatrix<f64>);

impl SensingOperator for DenseOperator<'_> {
    fn rows(&self) -> usize {
        self.0.nrows()
    }

    fn cols(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVectorView::from_slice(x, x.len());
        (self.0 * x).data.into()
    }

    fn apply_adjoint(&self, r: &[f64]) -> Vec<f64> {
        let r = DVectorView::from_slice(r, r.len());
        self.0.tr_mul(&r).data.into()
    }
}

/// `Phi' = [Phi | diag-blocks of level columns]`, block rows in the given order.
#[derive(Debug, Clone)]
pub struct StackedLevelOperator<'a> {
    phi: &'a DMatrix<f64>,
    block_levels: Vec<f64>,
}

impl<'a> StackedLevelOperator<'a> {
    /// `block_levels[b]` is the level of block row `b` (and of extra column `b`).
    pub fn new(phi: &'a DMatrix<f64>, block_levels: Vec<f64>) -> Self {
        Self { phi, block_levels }
    }

    pub fn head_len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn blocks(&self) -> usize {
        self.block_levels.len()
    }
}

impl SensingOperator for StackedLevelOperator<'_> {
    fn rows(&self) -> usize {
        self.phi.nrows() * self.blocks()
    }

    fn cols(&self) -> usize {
        self.phi.ncols() + self.blocks()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (head, tail) = x.split_at(self.head_len());
        let base = DenseOperator(self.phi).apply(head);
        let mut out = Vec::with_capacity(self.rows());
        for (level, coef) in self.block_levels.iter().zip(tail) {
            let offset = level * coef;
            out.extend(base.iter().map(|v| v + offset));
        }
        out
    }

    fn apply_adjoint(&self, r: &[f64]) -> Vec<f64> {
        let m = self.phi.nrows();
        let mut summed = vec![0.0; m];
        let mut tail = Vec::with_capacity(self.blocks());
        for (level, block) in self.block_levels.iter().zip(r.chunks_exact(m)) {
            let mut block_sum = 0.0;
            for (acc, v) in summed.iter_mut().zip(block) {
                *acc += v;
                block_sum += v;
            }
            tail.push(level * block_sum);
        }
        let mut out = DenseOperator(self.phi).apply_adjoint(&summed);
        out.extend(tail);
        out
    }
}
