//! Sparse symmetric bilinear regression of a scalar response on network
//! predictors.
//!
//! Each subject contributes a symmetric, zero-diagonal weighted adjacency
//! matrix `W` and a response `y`. The model
//!
//! ```text
//! E(y | W) = alpha + sum_h lambda_h * beta_h' W beta_h
//! ```
//!
//! is fitted under the product-form penalty
//! `gamma * sum_h |lambda_h| * sum_{u>v} |beta_hu * beta_hv|`, which drives
//! every component matrix `lambda_h * beta_h * beta_h'` towards a small
//! clique subgraph.
//!
//! Modules:
//! - [`network`] and [`model`]: domain types, prediction, penalty and loss.
//! - [`solver`]: coordinate descent with restarts, active sets and penalty paths.
//! - [`simulate`]: synthetic clique-signal benchmark.
//! - [`baseline`]: plain lasso over vectorized edges.
//! - [`eval`]: subgraph extraction, recovery scores and replicate studies.

pub mod baseline;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod network;
pub mod simulate;
pub mod solver;

pub use error::{Result, SblError};
pub use exec::Execution;
pub use model::{ComponentMatrix, Component, SblModel};
pub use network::{Edge, NetworkDataset, SymmetricNetwork};

/// Magnitudes at or below this are treated as zero when reading off supports.
pub const NUMERICAL_ZERO: f64 = 1e-12;

#[inline]
pub fn is_nonzero(x: f64) -> bool {
    x.abs() > NUMERICAL_ZERO
}
