//! Plain lasso on vectorized lower-triangular edge weights.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::network::{edge_count, Edge, NetworkDataset};
use crate::solver::soft_threshold;

/// `n x p` design of edge weights, `p = V(V-1)/2`, columns in
/// [`Edge`] order. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDesignMatrix {
    rows: usize,
    node_count: usize,
    values: Vec<f64>,
}

impl EdgeDesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        edge_count(self.node_count)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.rows..(k + 1) * self.rows]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[k * self.rows + i]
    }

    /// Columns multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        EdgeDesignMatrix {
            values: self.values.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    /// Row `i` written back into a symmetric matrix (zero diagonal).
    pub fn scatter_row(&self, i: usize) -> nalgebra::DMatrix<f64> {
        let v = self.node_count;
        let mut m = nalgebra::DMatrix::zeros(v, v);
        for k in 0..self.columns() {
            let e = Edge::from_index(k);
            m[(e.row, e.col)] = self.get(i, k);
            m[(e.col, e.row)] = self.get(i, k);
        }
        m
    }
}

pub fn vectorize(data: &NetworkDataset) -> EdgeDesignMatrix {
    let n = data.len();
    let v = data.node_count();
    let p = edge_count(v);
    let mut values = vec![0.0; n * p];
    for (i, w) in data.networks().iter().enumerate() {
        for k in 0..p {
            let e = Edge::from_index(k);
            values[k * n + i] = w.get(e.row, e.col);
        }
    }
    EdgeDesignMatrix {
        rows: n,
        node_count: v,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn predict_row(&self, design: &EdgeDesignMatrix, i: usize) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(k, b)| b * design.get(i, k))
                .sum::<f64>()
    }

    pub fn predict(&self, design: &EdgeDesignMatrix) -> Vec<f64> {
        (0..design.rows()).map(|i| self.predict_row(design, i)).collect()
    }

    pub fn selected_edges(&self) -> Vec<Edge> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| crate::is_nonzero(**b))
            .map(|(k, _)| Edge::from_index(k))
            .collect()
    }
}

/// Smallest penalty with an all-zero lasso solution:
/// `max_j |(1/n) sum_i x_ij (y_i - ybar)|`.
pub fn lasso_gamma_max(design: &EdgeDesignMatrix, responses: &[f64]) -> f64 {
    let n = design.rows() as f64;
    let ybar = responses.iter().sum::<f64>() / n;
    (0..design.columns())
        .map(|k| {
            design
                .column(k)
                .iter()
                .zip(responses)
                .map(|(x, y)| x * (y - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent state for
/// `(1/2n) sum_i (y_i - a - x_i' b)^2 + gamma * ||b||_1`.
pub struct LassoState<'a> {
    design: &'a EdgeDesignMatrix,
    responses: &'a [f64],
    col_sq: Vec<f64>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> LassoState<'a> {
    pub fn new(design: &'a EdgeDesignMatrix, responses: &'a [f64]) -> Result<Self> {
        if responses.len() != design.rows() {
            return Err(SblError::DimensionMismatch {
                expected: design.rows(),
                found: responses.len(),
            });
        }
        let n = design.rows() as f64;
        let col_sq = (0..design.columns())
            .map(|k| design.column(k).iter().map(|x| x * x).sum::<f64>() / n)
            .collect();
        Ok(LassoState {
            design,
            responses,
            col_sq,
            intercept: 0.0,
            coefficients: vec![0.0; design.columns()],
            residual: responses.to_vec(),
        })
    }

    pub fn warm(mut self, intercept: f64, coefficients: &[f64]) -> Self {
        self.intercept = intercept;
        self.coefficients = coefficients.to_vec();
        for i in 0..self.design.rows() {
            self.residual[i] = self.responses[i] - intercept;
        }
        for (k, b) in coefficients.iter().enumerate() {
            if *b != 0.0 {
                for (r, x) in self.residual.iter_mut().zip(self.design.column(k)) {
                    *r -= b * x;
                }
            }
        }
        self
    }

    pub fn objective(&self, gamma: f64) -> f64 {
        let n = self.design.rows() as f64;
        self.residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n)
            + gamma * self.coefficients.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `(1/n) sum_i x_ik r_i` at the current residual.
    pub fn correlation(&self, k: usize) -> f64 {
        let n = self.design.rows() as f64;
        self.design
            .column(k)
            .iter()
            .zip(&self.residual)
            .map(|(x, r)| x * r)
            .sum::<f64>()
            / n
    }

    pub fn update_coefficient(&mut self, k: usize, gamma: f64) -> f64 {
        let old = self.coefficients[k];
        let new = if self.col_sq[k] <= crate::solver::DEGENERATE_CURVATURE {
            0.0
        } else {
            soft_threshold(self.correlation(k) + self.col_sq[k] * old, gamma) / self.col_sq[k]
        };
        let delta = new - old;
        if delta != 0.0 {
            self.coefficients[k] = new;
            for (r, x) in self.residual.iter_mut().zip(self.design.column(k)) {
                *r -= delta * x;
            }
        }
        new
    }

    pub fn update_intercept(&mut self) -> f64 {
        let shift = self.residual.iter().sum::<f64>() / self.residual.len() as f64;
        self.intercept += shift;
        self.residual.iter_mut().for_each(|r| *r -= shift);
        self.intercept
    }

    /// All coefficients in column order, then the intercept. Returns the
    /// largest `col_sq * delta^2` seen, glmnet's convergence measure.
    pub fn sweep(&mut self, gamma: f64) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.coefficients.len() {
            let old = self.coefficients[k];
            let new = self.update_coefficient(k, gamma);
            worst = worst.max(self.col_sq[k] * (new - old).powi(2));
        }
        let old = self.intercept;
        let new = self.update_intercept();
        worst.max((new - old).powi(2))
    }
}

/// Lasso by cyclic coordinate descent. Stops once no coordinate moves by
/// more than `tolerance` in curvature-weighted squared change.
pub fn lasso_fit(
    design: &EdgeDesignMatrix,
    responses: &[f64],
    gamma: f64,
    tolerance: f64,
) -> Result<LassoFit> {
    lasso_fit_from(design, responses, gamma, tolerance, None)
}

const LASSO_MAX_SWEEPS: usize = 100_000;

pub fn lasso_fit_from(
    design: &EdgeDesignMatrix,
    responses: &[f64],
    gamma: f64,
    tolerance: f64,
    warm: Option<&LassoFit>,
) -> Result<LassoFit> {
    if !(gamma >= 0.0) || !(tolerance > 0.0) {
        return Err(SblError::InvalidConfig("gamma must be >= 0 and tolerance > 0".into()));
    }
    let mut state = LassoState::new(design, responses)?;
    match warm {
        Some(w) => state = state.warm(w.intercept, &w.coefficients),
        None => {
            state.update_intercept();
        }
    }
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < LASSO_MAX_SWEEPS {
        let change = state.sweep(gamma);
        sweeps += 1;
        if change < tolerance {
            converged = true;
            break;
        }
    }
    Ok(LassoFit {
        intercept: state.intercept,
        coefficients: state.coefficients,
        sweeps,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct LassoPathPoint {
    pub gamma: f64,
    pub fit: LassoFit,
    pub train_objective: f64,
}

/// Warm-started fits over a penalty grid (any order; warm starts follow it).
pub fn lasso_path(
    design: &EdgeDesignMatrix,
    responses: &[f64],
    gammas: &[f64],
    tolerance: f64,
) -> Result<Vec<LassoPathPoint>> {
    let mut out: Vec<LassoPathPoint> = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let fit = lasso_fit_from(design, responses, gamma, tolerance, out.last().map(|p| &p.fit))?;
        let state = LassoState::new(design, responses)?.warm(fit.intercept, &fit.coefficients);
        out.push(LassoPathPoint {
            gamma,
            train_objective: state.objective(gamma),
            fit,
        });
    }
    Ok(out)
}
