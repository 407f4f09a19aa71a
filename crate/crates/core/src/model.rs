//! The fitted object: intercept plus `K` scaled rank-one components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::is_nonzero;
use crate::network::{NetworkDataset, SymmetricNetwork};

/// One rank-one term `scale * loading * loading'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub scale: f64,
    pub loading: Vec<f64>,
}

impl Component {
    pub fn dead(node_count: usize) -> Self {
        Component {
            scale: 0.0,
            loading: vec![0.0; node_count],
        }
    }

    /// A component whose matrix is identically zero. `scale == 0` is enough;
    /// the canonical dead state also has a zero loading.
    pub fn is_dead(&self) -> bool {
        !is_nonzero(self.scale) || self.loading.iter().all(|b| !is_nonzero(*b))
    }

    /// `sum_{u>v} |b_u b_v|`, the per-component penalty weight on `|scale|`.
    pub fn pair_abs_sum(&self) -> f64 {
        pair_abs_sum(&self.loading)
    }

    pub fn support(&self) -> Vec<usize> {
        self.loading
            .iter()
            .enumerate()
            .filter(|(_, b)| is_nonzero(**b))
            .map(|(u, _)| u)
            .collect()
    }
}

/// `sum_{u>v} |x_u x_v|` via `((sum |x|)^2 - sum x^2) / 2`.
pub(crate) fn pair_abs_sum(x: &[f64]) -> f64 {
    let (l1, l2) = x
        .iter()
        .fold((0.0, 0.0), |(a, b), v| (a + v.abs(), b + v * v));
    (0.5 * (l1 * l1 - l2)).max(0.0)
}

/// Intercept and components of a rank-`K` symmetric bilinear regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SblModel {
    intercept: f64,
    components: Vec<Component>,
    node_count: usize,
}

impl SblModel {
    pub fn new(intercept: f64, components: Vec<Component>) -> Result<Self> {
        let node_count = components.first().map_or(0, |c| c.loading.len());
        if components.is_empty() {
            return Err(SblError::InvalidConfig("model needs at least one component".into()));
        }
        for c in &components {
            if c.loading.len() != node_count {
                return Err(SblError::DimensionMismatch {
                    expected: node_count,
                    found: c.loading.len(),
                });
            }
        }
        if !intercept.is_finite()
            || components
                .iter()
                .any(|c| !c.scale.is_finite() || c.loading.iter().any(|b| !b.is_finite()))
        {
            return Err(SblError::InvalidConfig("non-finite model parameter".into()));
        }
        Ok(SblModel {
            intercept,
            components,
            node_count,
        })
    }

    /// All components dead, intercept given.
    pub fn null(intercept: f64, rank: usize, node_count: usize) -> Self {
        SblModel {
            intercept,
            components: vec![Component::dead(node_count); rank.max(1)],
            node_count,
        }
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn active_components(&self) -> usize {
        self.components.iter().filter(|c| !c.is_dead()).count()
    }

    /// Replaces any component with zero scale by the canonical `(0, 0)` state.
    pub fn normalized(mut self) -> Self {
        for c in &mut self.components {
            if c.is_dead() {
                *c = Component::dead(self.node_count);
            }
        }
        self
    }

    fn check_size(&self, network: &SymmetricNetwork) -> Result<()> {
        if network.size() != self.node_count {
            return Err(SblError::DimensionMismatch {
                expected: self.node_count,
                found: network.size(),
            });
        }
        Ok(())
    }

    /// `alpha + sum_h lambda_h * beta_h' W beta_h`.
    pub fn predict(&self, network: &SymmetricNetwork) -> Result<f64> {
        self.check_size(network)?;
        Ok(self.intercept
            + self
                .components
                .iter()
                .filter(|c| c.scale != 0.0)
                .map(|c| c.scale * network.bilinear(&c.loading))
                .sum::<f64>())
    }

    pub fn predict_all(&self, data: &NetworkDataset) -> Result<Vec<f64>> {
        data.networks().iter().map(|w| self.predict(w)).collect()
    }

    /// `sum_h |lambda_h| sum_{u>v} |beta_hu beta_hv|`.
    pub fn penalty(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.scale.abs() * c.pair_abs_sum())
            .sum()
    }

    /// Penalized least-squares objective
    /// `(1/2n) sum_i (y_i - yhat_i)^2 + gamma * penalty`.
    pub fn loss(&self, data: &NetworkDataset, gamma: f64) -> Result<f64> {
        if data.is_empty() {
            return Err(SblError::EmptyDataset);
        }
        let mut rss = 0.0;
        for (w, y) in data.networks().iter().zip(data.responses()) {
            let r = y - self.predict(w)?;
            rss += r * r;
        }
        Ok(rss / (2.0 * data.len() as f64) + gamma * self.penalty())
    }

    /// Dense `lambda_h * beta_h * beta_h'` (0-based `h`).
    pub fn component_matrix(&self, h: usize) -> Result<ComponentMatrix> {
        let c = self.components.get(h).ok_or(SblError::ComponentOutOfRange {
            index: h,
            rank: self.rank(),
        })?;
        let v = self.node_count;
        let matrix = if c.scale == 0.0 {
            DMatrix::zeros(v, v)
        } else {
            DMatrix::from_fn(v, v, |a, b| c.scale * c.loading[a] * c.loading[b])
        };
        Ok(ComponentMatrix {
            component_index: h,
            matrix,
        })
    }

    /// Sum of all component matrices.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let v = self.node_count;
        let mut b = DMatrix::zeros(v, v);
        for h in 0..self.rank() {
            b += self.component_matrix(h).expect("index in range").matrix;
        }
        b
    }
}

/// One dense component matrix, symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatrix {
    pub component_index: usize,
    pub matrix: DMatrix<f64>,
}

impl ComponentMatrix {
    /// Off-diagonal nonzero positions with `row > col`.
    pub fn off_diagonal_support(&self) -> Vec<crate::Edge> {
        let v = self.matrix.nrows();
        let mut out = Vec::new();
        for u in 0..v {
            for w in 0..u {
                if is_nonzero(self.matrix[(u, w)]) {
                    out.push(crate::Edge::new(u, w));
                }
            }
        }
        out
    }
}
