//! Coordinate-descent estimation of the penalized symmetric bilinear model.
//!
//! Each loading entry, each scale and the intercept has a closed-form
//! conditional minimizer (a soft-threshold for the first two, a mean for the
//! intercept), so every update weakly decreases the objective. A fit runs
//! several random initializations and keeps the lowest final loss.

mod path;
mod workspace;

pub use path::{
    estimate_gamma_max, estimate_gamma_max_on, fit_path, gamma_path, geometric_path, select_gamma, PathPoint, Selection,
    SelectionRule,
};
pub use workspace::{ComponentState, Design, SweepMode, SweepOutcome, Workspace, DEGENERATE_CURVATURE};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::exec::{map_indexed, mix_seed, Execution};
use crate::model::{Component, SblModel};
use crate::network::NetworkDataset;

/// `sign(x) * max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Upper bound on the number of components.
    pub rank: usize,
    pub gamma: f64,
    /// Relative objective change that ends descent.
    pub tolerance: f64,
    /// Sweep budget per restart.
    pub max_iterations: usize,
    pub full_cycles_before_active_set: usize,
    pub restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            rank: 5,
            gamma: 0.0,
            tolerance: 1e-5,
            max_iterations: 2000,
            full_cycles_before_active_set: 3,
            restarts: 10,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SblError::InvalidConfig(msg.into()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and nonnegative");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        FitConfig {
            gamma,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_loss: f64,
    /// Objective before the first sweep followed by the value after each sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub active_components: usize,
}

/// Seed of restart `r` under base seed `seed`.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    mix_seed(seed, restart as u64)
}

/// Random nonzero loadings, then intercept and scales by least squares of the
/// response on the component features.
pub fn initialize(data: &NetworkDataset, config: &FitConfig, restart_seed: u64) -> Result<SblModel> {
    config.validate()?;
    let v = data.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed);
    let loadings: Vec<Vec<f64>> = (0..config.rank)
        .map(|_| {
            (0..v)
                .map(|_| loop {
                    let b: f64 = rng.random_range(-1.0..1.0);
                    if b != 0.0 {
                        break b;
                    }
                })
                .collect()
        })
        .collect();
    with_least_squares_scales(data, loadings)
}

/// Intercept and scales fitted by least squares for fixed loadings.
pub fn with_least_squares_scales(data: &NetworkDataset, loadings: Vec<Vec<f64>>) -> Result<SblModel> {
    let n = data.len();
    let k = loadings.len();
    let mut z = DMatrix::zeros(n, k + 1);
    for (i, w) in data.networks().iter().enumerate() {
        z[(i, 0)] = 1.0;
        for (h, beta) in loadings.iter().enumerate() {
            if beta.len() != w.size() {
                return Err(SblError::DimensionMismatch {
                    expected: w.size(),
                    found: beta.len(),
                });
            }
            z[(i, h + 1)] = w.bilinear(beta);
        }
    }
    let y = DVector::from_column_slice(data.responses());
    let coef = ridge_jittered_least_squares(&z, &y);
    let comps = loadings
        .into_iter()
        .enumerate()
        .map(|(h, loading)| Component {
            scale: coef[h + 1],
            loading,
        })
        .collect();
    SblModel::new(coef[0], comps)
}

/// Normal equations solved by Cholesky. A rank-deficient system gets a ridge
/// of `1e-8 * trace / p` on the diagonal, grown tenfold until it factors.
fn ridge_jittered_least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let gram = z.transpose() * z;
    let rhs = z.transpose() * y;
    let p = gram.nrows();
    let max_diag = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let base = 1e-8 * gram.trace().max(f64::MIN_POSITIVE) / p as f64;
    let mut jitter = 0.0;
    loop {
        let mut a = gram.clone();
        for j in 0..p {
            a[(j, j)] += jitter;
        }
        if let Some(chol) = a.cholesky() {
            let min_pivot = chol.l_dirty().diagonal().map(|x| x * x).min();
            if min_pivot > 1e-12 * max_diag {
                let sol = chol.solve(&rhs);
                if sol.iter().all(|x| x.is_finite()) {
                    return sol;
                }
            }
        }
        jitter = if jitter == 0.0 { base } else { jitter * 10.0 };
        if !jitter.is_finite() {
            return DVector::zeros(p);
        }
    }
}

/// A dataset prepared for repeated fitting.
pub struct Problem<'a> {
    data: &'a NetworkDataset,
    design: Design,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a NetworkDataset) -> Self {
        Problem {
            data,
            design: Design::new(data),
        }
    }

    pub fn data(&self) -> &'a NetworkDataset {
        self.data
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Runs `config.restarts` random initializations.
    pub fn fit(&self, config: &FitConfig) -> Result<(SblModel, FitReport)> {
        self.fit_from(config, None)
    }

    /// Like [`Problem::fit`], with `warm` (when given) taking the place of
    /// restart 0 and `config.restarts - 1` fresh initializations after it.
    pub fn fit_from(&self, config: &FitConfig, warm: Option<&SblModel>) -> Result<(SblModel, FitReport)> {
        config.validate()?;
        if let Some(m) = warm {
            if m.rank() != config.rank || m.node_count() != self.data.node_count() {
                return Err(SblError::InvalidConfig(format!(
                    "warm start has rank {} on {} nodes, expected rank {} on {}",
                    m.rank(),
                    m.node_count(),
                    config.rank,
                    self.data.node_count()
                )));
            }
        }
        let outcomes = map_indexed(config.execution, config.restarts, |r| {
            let start = match (r, warm) {
                (0, Some(m)) => m.clone(),
                _ => initialize(self.data, config, restart_seed(config.seed, r))?,
            };
            self.descend(&start, config, r)
        });
        let mut best: Option<(SblModel, FitReport)> = None;
        let mut last_err = None;
        for outcome in outcomes {
            match outcome {
                Ok((m, rep)) => {
                    // strict comparison keeps the lowest restart index on ties
                    if best.as_ref().is_none_or(|(_, b)| rep.final_loss < b.final_loss) {
                        best = Some((m, rep));
                    }
                }
                Err(e) => {
                    log::warn!("restart aborted: {e}");
                    last_err = Some(e);
                }
            }
        }
        best.ok_or_else(|| SblError::AllRestartsFailed {
            restarts: config.restarts,
            last: Box::new(last_err.expect("no restarts ran")),
        })
    }

    /// Coordinate descent from `start` until the relative objective change
    /// drops below tolerance.
    ///
    /// The first `full_cycles_before_active_set` sweeps visit every
    /// parameter; after that sweeps only visit nonzero loadings. When an
    /// active sweep converges a full sweep verifies it, and descent resumes
    /// on the active set if that sweep switched anything on.
    pub fn descend(&self, start: &SblModel, config: &FitConfig, restart: usize) -> Result<(SblModel, FitReport)> {
        let gamma = config.gamma;
        let mut ws = Workspace::new(&self.design, start)?;
        let mut trace = Vec::with_capacity(64);
        trace.push(ws.loss(gamma));
        let mut full_done = 0;
        let mut verify = false;
        let mut converged = false;
        while trace.len() <= config.max_iterations {
            let mode = if full_done < config.full_cycles_before_active_set || verify {
                SweepMode::Full
            } else {
                SweepMode::Active
            };
            let outcome = ws.sweep(gamma, mode);
            let loss = ws.loss(gamma);
            let iteration = trace.len();
            if !loss.is_finite() {
                return Err(SblError::NonFiniteObjective { restart, iteration });
            }
            let prev = *trace.last().expect("trace starts non-empty");
            trace.push(loss);
            let rel = (loss - prev).abs() / prev.abs().max(1e-12);
            match mode {
                SweepMode::Full => {
                    full_done += 1;
                    if rel < config.tolerance && !outcome.activated {
                        converged = true;
                        break;
                    }
                    verify = false;
                }
                SweepMode::Active => verify = rel < config.tolerance,
            }
        }
        let model = ws.model();
        let report = FitReport {
            final_loss: *trace.last().expect("trace starts non-empty"),
            iterations: trace.len() - 1,
            objective_trace: trace,
            converged,
            restart_index: restart,
            active_components: model.active_components(),
        };
        Ok((model, report))
    }
}

/// Fits `data` with `config.restarts` random initializations and returns the
/// lowest-loss result.
pub fn fit(data: &NetworkDataset, config: &FitConfig) -> Result<(SblModel, FitReport)> {
    Problem::new(data).fit(config)
}
