//! Penalty paths: the null-model penalty, geometric grids, warm-started path
//! fits and the test-error selection rules.

use serde::{Deserialize, Serialize};

use super::{initialize, restart_seed, FitConfig, FitReport, Problem, Workspace};
use crate::error::{Result, SblError};
use crate::model::SblModel;
use crate::network::NetworkDataset;

/// Doublings tried before giving up on confirming full shrinkage.
const MAX_DOUBLINGS: usize = 64;

/// Smallest value returned when the data carry no signal at all.
const GAMMA_FLOOR: f64 = 1e-12;

/// Approximate smallest penalty at which the fit is the null model.
///
/// Starts from `max_h |c_h| / sum_{u>v} |beta_hu beta_hv|` over the
/// initializations the fit itself would use (the penalty at which the first
/// scale update zeroes every component), then doubles until
/// `fit(data, config.with_gamma(g))` returns no active component.
pub fn estimate_gamma_max(data: &NetworkDataset, config: &FitConfig) -> Result<f64> {
    let problem = Problem::new(data);
    estimate_gamma_max_on(&problem, config)
}

pub fn estimate_gamma_max_on(problem: &Problem<'_>, config: &FitConfig) -> Result<f64> {
    config.validate()?;
    let data = problem.data();
    let mut heuristic = 0.0f64;
    for r in 0..config.restarts {
        let start = initialize(data, config, restart_seed(config.seed, r))?;
        let ws = Workspace::new(problem.design(), &start)?;
        for h in 0..config.rank {
            let (c, _) = ws.lambda_partials(h);
            let weight = start.components()[h].pair_abs_sum();
            if weight > 0.0 {
                heuristic = heuristic.max(c.abs() / weight);
            }
        }
    }
    let mut gamma = if heuristic.is_finite() && heuristic > GAMMA_FLOOR {
        heuristic
    } else {
        GAMMA_FLOOR
    };
    for _ in 0..MAX_DOUBLINGS {
        let (model, _) = problem.fit(&config.with_gamma(gamma))?;
        if model.active_components() == 0 {
            return Ok(gamma);
        }
        gamma *= 2.0;
    }
    log::warn!("could not confirm full shrinkage; returning {gamma:e}");
    Ok(gamma)
}

/// `count` values from `0.01 * gamma_max` to `gamma_max`, equally spaced on
/// the log scale and strictly increasing.
pub fn geometric_path(gamma_max: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2, "a path needs at least two points");
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| gamma_max * 0.01f64.powf(1.0 - k as f64 / last))
        .collect()
}

pub fn gamma_path(data: &NetworkDataset, config: &FitConfig, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(SblError::InvalidConfig("path needs at least two points".into()));
    }
    Ok(geometric_path(estimate_gamma_max(data, config)?, count))
}

#[derive(Debug, Clone)]
pub struct PathPoint {
    pub gamma: f64,
    pub model: SblModel,
    pub report: FitReport,
    pub test_mse: Option<f64>,
}

/// Fits every penalty in `gammas` (ascending). Each point reuses the winner
/// of the previous point as restart 0.
pub fn fit_path(
    problem: &Problem<'_>,
    config: &FitConfig,
    gammas: &[f64],
    test: Option<&NetworkDataset>,
) -> Result<Vec<PathPoint>> {
    if gammas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SblError::InvalidConfig("penalty path must be strictly increasing".into()));
    }
    let mut points: Vec<PathPoint> = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let warm = points.last().map(|p| &p.model);
        let (model, report) = problem.fit_from(&config.with_gamma(gamma), warm)?;
        let test_mse = match test {
            Some(t) => Some(crate::eval::mse(&model.predict_all(t)?, t.responses())?),
            None => None,
        };
        points.push(PathPoint {
            gamma,
            model,
            report,
            test_mse,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Largest penalty whose test error is at most `tau` times the test error
    /// of the null model.
    Threshold(f64),
    /// Smallest test error; ties go to the larger penalty.
    MinMse,
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Threshold(0.03)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub gamma: f64,
    pub index: usize,
    /// The threshold rule had no qualifying point and the minimum was used.
    pub fell_back: bool,
}

/// Picks a penalty from `(gamma, test_mse)` pairs.
pub fn select_gamma(results: &[(f64, f64)], rule: SelectionRule, null_mse: f64) -> Result<Selection> {
    if results.is_empty() {
        return Err(SblError::InvalidConfig("no path results to select from".into()));
    }
    let min_rule = || {
        let mut best = 0;
        for (k, &(g, m)) in results.iter().enumerate() {
            let (bg, bm) = results[best];
            if m < bm || (m == bm && g > bg) {
                best = k;
            }
        }
        best
    };
    let (index, fell_back) = match rule {
        SelectionRule::MinMse => (min_rule(), false),
        SelectionRule::Threshold(tau) => {
            let cutoff = tau * null_mse;
            let qualifying = results
                .iter()
                .enumerate()
                .filter(|(_, (_, m))| *m <= cutoff)
                .max_by(|(_, a), (_, b)| a.0.total_cmp(&b.0))
                .map(|(k, _)| k);
            match qualifying {
                Some(k) => (k, false),
                None => {
                    log::warn!("no penalty reaches {tau} x null error; using the minimum-error rule");
                    (min_rule(), true)
                }
            }
        }
    };
    Ok(Selection {
        gamma: results[index].0,
        index,
        fell_back,
    })
}
