//! Core domain types: weighted adjacency matrices, datasets of snapshots
//! and observed/target node partitions.
//!
//! All indices are 0-based here. File formats use 1-based node numbers and
//! convert at the I/O boundary (see [`crate::io`]).

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Checks the invariants of a weighted adjacency matrix: square, at least
/// two nodes, finite entries and an exactly zero diagonal.
pub fn validate_graph(weights: &DMatrix<f64>) -> Result<()> {
    if weights.nrows() != weights.ncols() {
        return Err(Error::DimensionMismatch {
            expected: weights.nrows(),
            found: weights.ncols(),
            context: "adjacency matrix must be square",
        });
    }
    if weights.nrows() < 2 {
        return Err(Error::TooFewNodes);
    }
    for i in 0..weights.nrows() {
        for j in 0..weights.ncols() {
            if !weights[(i, j)].is_finite() {
                return Err(Error::NonFinite(i, j));
            }
        }
    }
    for i in 0..weights.nrows() {
        if weights[(i, i)] != 0.0 {
            return Err(Error::NonZeroDiagonal(i));
        }
    }
    Ok(())
}

/// A P×P weighted adjacency matrix. Row `i` holds the incoming weights
/// `w[i][j]`, the linear effect of node `j` on node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    weights: DMatrix<f64>,
}

impl WeightedGraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        validate_graph(&weights)?;
        Ok(Self { weights })
    }

    /// The empty graph on `p` nodes.
    pub fn zeros(p: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(p, p))
    }

    /// Builds a graph from row vectors that omit the diagonal entry, as
    /// produced by the per-node regressions.
    pub fn from_offdiag_rows(rows: &[DVector<f64>]) -> Result<Self> {
        let p = rows.len();
        let mut weights = DMatrix::zeros(p, p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() + 1 != p {
                return Err(Error::DimensionMismatch {
                    expected: p.saturating_sub(1),
                    found: row.len(),
                    context: "off-diagonal row length",
                });
            }
            for (k, &w) in row.iter().enumerate() {
                weights[(i, offdiag_to_full(i, k))] = w;
            }
        }
        Self::new(weights)
    }

    pub fn num_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    /// Row `i` without its diagonal element (length P−1).
    pub fn offdiag_row(&self, i: usize) -> DVector<f64> {
        let p = self.num_nodes();
        DVector::from_iterator(p - 1, (0..p).filter(|&j| j != i).map(|j| self.weights[(i, j)]))
    }

    /// Number of exactly nonzero entries.
    pub fn nnz(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Relabels nodes: node `perm[k]` of `self` becomes node `k`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.num_nodes();
        let weights = DMatrix::from_fn(p, p, |i, j| self.weights[(perm[i], perm[j])]);
        Self { weights }
    }
}

/// Maps position `k` in a row with the diagonal removed back to the full
/// column index.
#[inline]
pub fn offdiag_to_full(i: usize, k: usize) -> usize {
    if k < i {
        k
    } else {
        k + 1
    }
}

/// N snapshots of a P-dimensional signal, one per row, together with the
/// mean that was subtracted from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    center: DVector<f64>,
}

impl Dataset {
    /// Wraps uncentered (or already centered) samples; `center` is zero.
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        let p = samples.ncols();
        Self::with_center(samples, DVector::zeros(p))
    }

    pub fn with_center(samples: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        if center.len() != samples.ncols() {
            return Err(Error::DimensionMismatch {
                expected: samples.ncols(),
                found: center.len(),
                context: "dataset center length",
            });
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let n = samples.nrows();
            return Err(Error::NonFinite(k % n, k / n));
        }
        if let Some(j) = center.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(0, j));
        }
        Ok(Self { samples, center })
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_nodes(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// The first `n` snapshots, keeping the recorded center.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.num_samples());
        Dataset {
            samples: self.samples.rows(0, n).into_owned(),
            center: self.center.clone(),
        }
    }

    /// Snapshot `n` as a column vector.
    pub fn snapshot(&self, n: usize) -> DVector<f64> {
        self.samples.row(n).transpose()
    }
}

/// Partition of nodes into observed nodes and prediction targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplit {
    observed: Vec<usize>,
    targets: Vec<usize>,
}

impl NodeSplit {
    /// Validates 0-based index sets against a graph with `p` nodes.
    pub fn new(observed: Vec<usize>, targets: Vec<usize>, p: usize) -> Result<Self> {
        if observed.is_empty() || targets.is_empty() {
            return Err(Error::InvalidSplit(
                "observed and target sets must both be nonempty".into(),
            ));
        }
        let mut seen = HashSet::new();
        for &k in observed.iter().chain(targets.iter()) {
            if k >= p {
                return Err(Error::InvalidSplit(format!(
                    "node {} is out of range 1..={p}",
                    k + 1
                )));
            }
            if !seen.insert(k) {
                return Err(Error::InvalidSplit(format!(
                    "node {} appears more than once",
                    k + 1
                )));
            }
        }
        Ok(Self { observed, targets })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Largest node index referenced, plus one.
    pub fn min_nodes(&self) -> usize {
        self.observed
            .iter()
            .chain(self.targets.iter())
            .max()
            .map_or(0, |m| m + 1)
    }
}
