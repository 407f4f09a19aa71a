//! Network predictors and the aligned (network, response) dataset.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Largest asymmetry, relative to the largest entry magnitude, that the
/// lenient loader repairs by averaging instead of rejecting.
pub const SYMMETRY_REPAIR_TOLERANCE: f64 = 1e-8;

/// Undirected edge between two distinct nodes, stored with `row > col`.
///
/// The derived ordering sorts by `row` then `col`, which is the
/// lower-triangular lexicographic order used for vectorized edges:
/// (1,0), (2,0), (2,1), (3,0), ... in 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub row: usize,
    pub col: usize,
}

impl Edge {
    /// Normalizes the pair. Panics on a self loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert!(a != b, "self loop ({a}, {b}) is not an edge");
        Edge {
            row: a.max(b),
            col: a.min(b),
        }
    }

    /// Position of this edge in the lower-triangular order.
    pub fn index(&self) -> usize {
        self.row * (self.row - 1) / 2 + self.col
    }

    /// Inverse of [`Edge::index`].
    pub fn from_index(k: usize) -> Self {
        // largest row with row*(row-1)/2 <= k
        let mut row = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as usize;
        while row * (row - 1) / 2 > k {
            row -= 1;
        }
        while (row + 1) * row / 2 <= k {
            row += 1;
        }
        Edge {
            row,
            col: k - row * (row - 1) / 2,
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Number of unordered node pairs on `v` nodes.
pub fn edge_count(v: usize) -> usize {
    v * v.saturating_sub(1) / 2
}

/// One subject's symmetric, zero-diagonal weighted adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricNetwork {
    weights: DMatrix<f64>,
}

impl SymmetricNetwork {
    /// Strict constructor: the matrix must be square, finite, exactly
    /// symmetric and have a zero diagonal.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&weights)?;
        let v = weights.nrows();
        for u in 0..v {
            if weights[(u, u)] != 0.0 {
                return Err(SblError::InvalidNetwork(format!(
                    "diagonal entry ({u}, {u}) is {}",
                    weights[(u, u)]
                )));
            }
            for w in 0..u {
                if weights[(u, w)] != weights[(w, u)] {
                    return Err(SblError::InvalidNetwork(format!(
                        "entries ({u}, {w}) and ({w}, {u}) differ"
                    )));
                }
            }
        }
        Ok(SymmetricNetwork { weights })
    }

    /// Lenient constructor for matrices read from disk. Round-off asymmetry
    /// up to [`SYMMETRY_REPAIR_TOLERANCE`] (relative) is averaged away and a
    /// nonzero diagonal is zeroed with a warning; anything worse is rejected.
    pub fn repaired(mut weights: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&weights)?;
        let v = weights.nrows();
        let scale = weights.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for u in 0..v {
            for w in 0..u {
                worst = worst.max((weights[(u, w)] - weights[(w, u)]).abs());
            }
        }
        if worst / scale > SYMMETRY_REPAIR_TOLERANCE {
            return Err(SblError::InvalidNetwork(format!(
                "relative asymmetry {:.3e} exceeds {SYMMETRY_REPAIR_TOLERANCE:e}",
                worst / scale
            )));
        }
        if worst > 0.0 {
            let t = weights.transpose();
            weights = (weights + t) * 0.5;
        }
        if (0..v).any(|u| weights[(u, u)] != 0.0) {
            log::warn!("network has a nonzero diagonal; zeroing it");
            weights.fill_diagonal(0.0);
        }
        Ok(SymmetricNetwork { weights })
    }

    /// Builds a network from a function of the lower triangle (`row > col`).
    pub fn from_lower<F: FnMut(usize, usize) -> f64>(v: usize, mut f: F) -> Result<Self> {
        let mut weights = DMatrix::zeros(v, v);
        for u in 0..v {
            for w in 0..u {
                let x = f(u, w);
                weights[(u, w)] = x;
                weights[(w, u)] = x;
            }
        }
        Self::new(weights)
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[(u, v)]
    }

    /// Symmetric bilinear form `x' W x`.
    pub fn bilinear(&self, x: &[f64]) -> f64 {
        let v = self.size();
        debug_assert_eq!(x.len(), v);
        let mut total = 0.0;
        for u in 0..v {
            if x[u] == 0.0 {
                continue;
            }
            // symmetric with zero diagonal: twice the strict lower triangle
            let col = self.weights.column(u);
            let mut row_sum = 0.0;
            for w in (u + 1)..v {
                row_sum += col[w] * x[w];
            }
            total += x[u] * row_sum;
        }
        2.0 * total
    }
}

fn check_square_finite(weights: &DMatrix<f64>) -> Result<()> {
    if weights.nrows() != weights.ncols() {
        return Err(SblError::InvalidNetwork(format!(
            "matrix is {}x{}, not square",
            weights.nrows(),
            weights.ncols()
        )));
    }
    if weights.iter().any(|x| !x.is_finite()) {
        return Err(SblError::InvalidNetwork("non-finite entry".into()));
    }
    Ok(())
}

/// Aligned networks and responses sharing one node count.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDataset {
    networks: Vec<SymmetricNetwork>,
    responses: Vec<f64>,
    node_count: usize,
}

impl NetworkDataset {
    pub fn new(networks: Vec<SymmetricNetwork>, responses: Vec<f64>) -> Result<Self> {
        if networks.is_empty() {
            return Err(SblError::EmptyDataset);
        }
        if networks.len() != responses.len() {
            return Err(SblError::DimensionMismatch {
                expected: networks.len(),
                found: responses.len(),
            });
        }
        let node_count = networks[0].size();
        if node_count < 2 {
            return Err(SblError::InvalidNetwork(format!(
                "networks need at least 2 nodes, got {node_count}"
            )));
        }
        if let Some(bad) = networks.iter().find(|w| w.size() != node_count) {
            return Err(SblError::DimensionMismatch {
                expected: node_count,
                found: bad.size(),
            });
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(SblError::InvalidConfig("non-finite response".into()));
        }
        Ok(NetworkDataset {
            networks,
            responses,
            node_count,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn networks(&self) -> &[SymmetricNetwork] {
        &self.networks
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn response_mean(&self) -> f64 {
        self.responses.iter().sum::<f64>() / self.len() as f64
    }

    /// Subset in the given order. Indices must be in range.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let networks = indices.iter().map(|&i| self.networks[i].clone()).collect();
        let responses = indices.iter().map(|&i| self.responses[i]).collect();
        Self::new(networks, responses)
    }

    /// Same networks, responses multiplied by `factor`.
    pub fn with_scaled_responses(&self, factor: f64) -> Self {
        NetworkDataset {
            networks: self.networks.clone(),
            responses: self.responses.iter().map(|y| y * factor).collect(),
            node_count: self.node_count,
        }
    }
}
