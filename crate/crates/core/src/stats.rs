//! Sufficient statistics for the per-node regressions.
//!
//! Only the full P×P Gram matrix `XᵀX` and the sample count are stored.
//! Every per-node quantity (the Gram of the other columns, the
//! cross-products with the target column, squared column norms) is a
//! masked view of it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{offdiag_to_full, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    gram: DMatrix<f64>,
    n: usize,
}

impl SuffStats {
    /// Statistics of an empty dataset with `p` nodes.
    pub fn empty(p: usize) -> Self {
        Self {
            gram: DMatrix::zeros(p, p),
            n: 0,
        }
    }

    /// Exact statistics of a dataset, `O(NP²)`.
    pub fn from_dataset(data: &Dataset) -> Self {
        let x = data.samples();
        Self {
            gram: x.tr_mul(x),
            n: x.nrows(),
        }
    }

    /// Adds one snapshot in `O(P²)`.
    pub fn rank_one_update(&mut self, x_new: &DVector<f64>) -> Result<()> {
        let p = self.num_nodes();
        if x_new.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: x_new.len(),
                context: "snapshot length",
            });
        }
        if let Some(j) = x_new.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.n, j));
        }
        self.gram.ger(1.0, x_new, x_new, 1.0);
        self.n += 1;
        Ok(())
    }

    /// Non-mutating form of [`SuffStats::rank_one_update`].
    pub fn updated(&self, x_new: &DVector<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.rank_one_update(x_new)?;
        Ok(next)
    }

    pub fn num_nodes(&self) -> usize {
        self.gram.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    /// The full Gram matrix `XᵀX`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `‖x_i‖²`.
    pub fn target_energy(&self, i: usize) -> f64 {
        self.gram[(i, i)]
    }

    /// Squared norms of every column.
    pub fn column_norms_sq(&self) -> DVector<f64> {
        self.gram.diagonal()
    }

    /// `X₋ᵢᵀX₋ᵢ`, the Gram of all columns except `i`.
    pub fn gram_without(&self, i: usize) -> DMatrix<f64> {
        let p = self.num_nodes();
        DMatrix::from_fn(p - 1, p - 1, |r, c| {
            self.gram[(offdiag_to_full(i, r), offdiag_to_full(i, c))]
        })
    }

    /// `X₋ᵢᵀxᵢ`.
    pub fn cross(&self, i: usize) -> DVector<f64> {
        let p = self.num_nodes();
        DVector::from_fn(p - 1, |r, _| self.gram[(offdiag_to_full(i, r), i)])
    }
}
