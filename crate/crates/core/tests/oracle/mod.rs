//! Optimizer checks against independent dense oracles.
//!
//! Every check takes an instance seed and returns `Err` with a description
//! on failure, so the same code backs the property tests here and the
//! acceptance runner in the CLI crate. The oracles recompute the objective
//! with explicit loops over full matrices and never touch the solver caches.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbl_core::baseline::{vectorize, LassoState};
use sbl_core::model::Component;
use sbl_core::solver::{estimate_gamma_max, FitConfig, Problem, SweepMode, Workspace};
use sbl_core::{Edge, NetworkDataset, SblModel, SymmetricNetwork};

pub type Check = Result<(), String>;

/// Plain-vector copy of a model, for oracle arithmetic.
#[derive(Debug, Clone)]
pub struct Params {
    pub alpha: f64,
    pub lambda: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl Params {
    pub fn of(model: &SblModel) -> Self {
        Params {
            alpha: model.intercept(),
            lambda: model.components().iter().map(|c| c.scale).collect(),
            beta: model.components().iter().map(|c| c.loading.clone()).collect(),
        }
    }

    pub fn to_model(&self) -> SblModel {
        let comps = self
            .lambda
            .iter()
            .zip(&self.beta)
            .map(|(&scale, loading)| Component { scale, loading: loading.clone() })
            .collect();
        SblModel::new(self.alpha, comps).unwrap()
    }
}

pub fn quad_form(w: &SymmetricNetwork, x: &[f64]) -> f64 {
    let v = x.len();
    let mut s = 0.0;
    for a in 0..v {
        for b in 0..v {
            s += x[a] * w.get(a, b) * x[b];
        }
    }
    s
}

pub fn dense_residuals(data: &NetworkDataset, p: &Params) -> Vec<f64> {
    data.networks()
        .iter()
        .zip(data.responses())
        .map(|(w, y)| {
            let mut fit = p.alpha;
            for (lam, beta) in p.lambda.iter().zip(&p.beta) {
                fit += lam * quad_form(w, beta);
            }
            y - fit
        })
        .collect()
}

pub fn dense_penalty(p: &Params) -> f64 {
    let mut total = 0.0;
    for (lam, beta) in p.lambda.iter().zip(&p.beta) {
        let mut pairs = 0.0;
        for u in 0..beta.len() {
            for v in 0..u {
                pairs += (beta[u] * beta[v]).abs();
            }
        }
        total += lam.abs() * pairs;
    }
    total
}

pub fn dense_loss(data: &NetworkDataset, p: &Params, gamma: f64) -> f64 {
    let r = dense_residuals(data, p);
    r.iter().map(|x| x * x).sum::<f64>() / (2.0 * data.len() as f64) + gamma * dense_penalty(p)
}

/// `sum_{v != u} W_i[u][v] beta_v`
fn row_sum(w: &SymmetricNetwork, beta: &[f64], u: usize) -> f64 {
    (0..beta.len()).filter(|&v| v != u).map(|v| w.get(u, v) * beta[v]).sum()
}

/// Derivative of the smooth loss in `beta_hu`.
pub fn dense_beta_gradient(data: &NetworkDataset, p: &Params, h: usize, u: usize) -> f64 {
    let r = dense_residuals(data, p);
    let n = data.len() as f64;
    let lam = p.lambda[h];
    let mut g = 0.0;
    for (i, w) in data.networks().iter().enumerate() {
        g -= r[i] * lam * 2.0 * row_sum(w, &p.beta[h], u);
    }
    g / n
}

/// Derivative of the smooth loss in `lambda_h`.
pub fn dense_lambda_gradient(data: &NetworkDataset, p: &Params, h: usize) -> f64 {
    let r = dense_residuals(data, p);
    let mut g = 0.0;
    for (i, w) in data.networks().iter().enumerate() {
        g -= r[i] * quad_form(w, &p.beta[h]);
    }
    g / data.len() as f64
}

pub fn random_network(rng: &mut ChaCha8Rng, v: usize) -> SymmetricNetwork {
    SymmetricNetwork::from_lower(v, |_, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// A dataset generated by a random sparse model, plus a random start.
pub struct Instance {
    pub data: NetworkDataset,
    pub start: SblModel,
    pub gamma: f64,
}

pub fn random_loading(rng: &mut ChaCha8Rng, v: usize, zero_prob: f64) -> Vec<f64> {
    (0..v)
        .map(|_| if rng.random_bool(zero_prob) { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect()
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(3..=8);
    let n = rng.random_range(6..=20);
    let k = rng.random_range(1..=3);
    instance_with(&mut rng, v, n, k)
}

/// Small instances with more samples than edges, where descent converges
/// in a modest number of sweeps.
pub fn well_posed_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(3..=5);
    let n = rng.random_range(30..=40);
    let k = rng.random_range(1..=2);
    instance_with(&mut rng, v, n, k)
}

fn instance_with(rng: &mut ChaCha8Rng, v: usize, n: usize, k: usize) -> Instance {
    let truth = Params {
        alpha: rng.random_range(-1.0..1.0),
        lambda: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        beta: (0..k).map(|_| random_loading(rng, v, 0.4)).collect(),
    };
    let networks: Vec<SymmetricNetwork> = (0..n).map(|_| random_network(rng, v)).collect();
    let responses = networks
        .iter()
        .map(|w| {
            let mut y = truth.alpha + rng.random_range(-0.3..0.3);
            for (lam, beta) in truth.lambda.iter().zip(&truth.beta) {
                y += lam * quad_form(w, beta);
            }
            y
        })
        .collect();
    let data = NetworkDataset::new(networks, responses).unwrap();
    let start = Params {
        alpha: rng.random_range(-1.0..1.0),
        lambda: (0..k).map(|_| rng.random_range(0.2..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        beta: (0..k).map(|_| random_loading(rng, v, 0.2)).collect(),
    }
    .to_model();
    let gamma = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.2) };
    Instance { data, start, gamma }
}

enum Coordinate {
    Beta(usize, usize),
    Lambda(usize),
    Alpha,
}

/// Every single coordinate update, in random order, never raises the
/// objective by more than `1e-10`.
pub fn monotone_updates(seed: u64) -> Check {
    let inst = random_instance(seed);
    let problem = Problem::new(&inst.data);
    let mut ws = Workspace::new(problem.design(), &inst.start).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (k, v) = (inst.start.rank(), inst.data.node_count());
    let mut before = dense_loss(&inst.data, &Params::of(&ws.raw_model()), inst.gamma);
    for step in 0..200 {
        let pick = rng.random_range(0..k * v + k + 1);
        let coord = if pick < k * v {
            Coordinate::Beta(pick / v, pick % v)
        } else if pick < k * v + k {
            Coordinate::Lambda(pick - k * v)
        } else {
            Coordinate::Alpha
        };
        match coord {
            Coordinate::Beta(h, u) => {
                ws.update_beta_entry(h, u, inst.gamma);
            }
            Coordinate::Lambda(h) => {
                ws.update_lambda(h, inst.gamma);
            }
            Coordinate::Alpha => {
                ws.update_alpha();
            }
        }
        let after = dense_loss(&inst.data, &Params::of(&ws.raw_model()), inst.gamma);
        if after > before + 1e-10 {
            return Err(format!("seed {seed} step {step}: loss rose from {before} to {after}"));
        }
        before = after;
    }
    Ok(())
}

/// Minimizer of a convex function on `[lo, hi]` by grid search then
/// ternary refinement around the best grid point.
/// A coordinate the objective does not depend on resolves to zero.
pub fn brute_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mid = f(0.5 * (lo + hi));
    let flat = [lo, hi].iter().all(|&x| (f(x) - mid).abs() <= 1e-15 * mid.abs().max(1.0));
    if flat {
        return 0.0;
    }
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for k in 0..=steps {
        let val = f(lo + h * k as f64);
        if val < best_val {
            best_val = val;
            best = k;
        }
    }
    let mut a = (lo + h * (best as f64 - 1.0)).max(lo);
    let mut b = (lo + h * (best as f64 + 1.0)).min(hi);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    0.5 * (a + b)
}

const ORACLE_RANGE: f64 = 10.0;

/// One loading entry and one scale update against a brute-force minimizer
/// of the full objective along that coordinate. Returns `Ok(false)` when the
/// minimizer falls outside the search interval.
pub fn closed_form_updates(seed: u64) -> Result<bool, String> {
    let inst = random_instance(seed);
    let problem = Problem::new(&inst.data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb7u64);
    let (k, v) = (inst.start.rank(), inst.data.node_count());
    let base = Params::of(&inst.start);
    let (h, u) = (rng.random_range(0..k), rng.random_range(0..v));
    let gamma = inst.gamma;

    let mut ws = Workspace::new(problem.design(), &inst.start).map_err(|e| e.to_string())?;
    let got = ws.update_beta_entry(h, u, gamma);
    let along_beta = |x: f64| {
        let mut p = base.clone();
        p.beta[h][u] = x;
        dense_loss(&inst.data, &p, gamma)
    };
    if got.abs() > ORACLE_RANGE {
        return Ok(false);
    }
    let want = brute_argmin(&along_beta, -ORACLE_RANGE, ORACLE_RANGE);
    if (got - want).abs() > 1e-6 {
        return Err(format!("seed {seed}: beta[{h}][{u}] update {got}, brute force {want}"));
    }

    let mut ws = Workspace::new(problem.design(), &inst.start).map_err(|e| e.to_string())?;
    let got = ws.update_lambda(h, gamma);
    let along_lambda = |x: f64| {
        let mut p = base.clone();
        p.lambda[h] = x;
        dense_loss(&inst.data, &p, gamma)
    };
    if got.abs() > ORACLE_RANGE {
        return Ok(false);
    }
    let want = brute_argmin(&along_lambda, -ORACLE_RANGE, ORACLE_RANGE);
    if (got - want).abs() > 1e-6 {
        return Err(format!("seed {seed}: lambda[{h}] update {got}, brute force {want}"));
    }
    Ok(true)
}

/// Central differences of the smooth loss against `-a + d * beta_hu`.
pub fn gradient_matches_finite_differences(seed: u64) -> Check {
    let inst = random_instance(seed);
    let problem = Problem::new(&inst.data);
    let mut ws = Workspace::new(problem.design(), &inst.start).map_err(|e| e.to_string())?;
    let base = Params::of(&inst.start);
    let step = 1e-5;
    for h in 0..inst.start.rank() {
        for u in 0..inst.data.node_count() {
            let (a, d) = ws.smooth_partials(h, u);
            let analytic = -a + d * base.beta[h][u];
            let at = |x: f64| {
                let mut p = base.clone();
                p.beta[h][u] = x;
                dense_loss(&inst.data, &p, 0.0)
            };
            let x0 = base.beta[h][u];
            let fd = (at(x0 + step) - at(x0 - step)) / (2.0 * step);
            if (fd - analytic).abs() > 1e-5 * analytic.abs().max(1.0) {
                return Err(format!("seed {seed}: d/dbeta[{h}][{u}] analytic {analytic}, finite difference {fd}"));
            }
        }
    }
    Ok(())
}

/// Fits tightly and checks the subgradient conditions of every parameter
/// with gradients recomputed from dense matrices. Returns `Ok(false)` when
/// descent did not converge: some instances have no minimizer, with one
/// component sliding towards a star (one loading growing without bound
/// while its scale and the other loadings shrink).
pub fn stationary_at_convergence(seed: u64) -> Result<bool, String> {
    let inst = well_posed_instance(seed);
    let gamma = inst.gamma.max(0.01);
    let config = FitConfig {
        rank: inst.start.rank(),
        gamma,
        tolerance: 1e-14,
        max_iterations: 100_000,
        restarts: 2,
        seed,
        ..FitConfig::default()
    };
    let (model, report) = Problem::new(&inst.data).fit(&config).map_err(|e| e.to_string())?;
    if !report.converged {
        return Ok(false);
    }
    let p = Params::of(&model);
    let tol = 1e-6;
    for h in 0..p.lambda.len() {
        let beta = &p.beta[h];
        for u in 0..beta.len() {
            let g = dense_beta_gradient(&inst.data, &p, h, u);
            let thr = gamma * p.lambda[h].abs() * (0..beta.len()).filter(|&w| w != u).map(|w| beta[w].abs()).sum::<f64>();
            let gap = if beta[u] != 0.0 {
                (g + thr * beta[u].signum()).abs()
            } else {
                (g.abs() - thr).max(0.0)
            };
            if gap > tol {
                return Err(format!("seed {seed}: beta[{h}][{u}] = {} violates stationarity by {gap:e}", beta[u]));
            }
        }
        let g = dense_lambda_gradient(&inst.data, &p, h);
        let pen = gamma * dense_penalty(&Params { alpha: 0.0, lambda: vec![1.0], beta: vec![beta.clone()] });
        let gap = if p.lambda[h] != 0.0 {
            (g + pen * p.lambda[h].signum()).abs()
        } else {
            (g.abs() - pen).max(0.0)
        };
        if gap > tol {
            return Err(format!("seed {seed}: lambda[{h}] = {} violates stationarity by {gap:e}", p.lambda[h]));
        }
    }
    let r = dense_residuals(&inst.data, &p);
    let mean_r = r.iter().sum::<f64>() / r.len() as f64;
    if mean_r.abs() > tol {
        return Err(format!("seed {seed}: intercept gradient {mean_r:e}"));
    }
    Ok(true)
}

fn component_matrices(model: &SblModel) -> Vec<Vec<f64>> {
    model
        .components()
        .iter()
        .map(|c| {
            let v = c.loading.len();
            let mut m = Vec::with_capacity(v * v);
            for a in 0..v {
                for b in 0..v {
                    m.push(c.scale * c.loading[a] * c.loading[b]);
                }
            }
            m
        })
        .collect()
}

/// Starting from `(lambda / c^2, c * beta)` instead of `(lambda, beta)`
/// yields the same component matrices after every sweep.
pub fn scale_invariant_iterates(seed: u64) -> Check {
    let inst = random_instance(seed);
    let problem = Problem::new(&inst.data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let base = Params::of(&inst.start);
    let mut scaled = base.clone();
    for h in 0..scaled.lambda.len() {
        let c: f64 = rng.random_range(0.25..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        scaled.lambda[h] /= c * c;
        scaled.beta[h].iter_mut().for_each(|b| *b *= c);
    }
    let mut a = Workspace::new(problem.design(), &base.to_model()).map_err(|e| e.to_string())?;
    let mut b = Workspace::new(problem.design(), &scaled.to_model()).map_err(|e| e.to_string())?;
    for sweep in 0..12 {
        let mode = if sweep < 3 { SweepMode::Full } else { SweepMode::Active };
        a.sweep(inst.gamma, mode);
        b.sweep(inst.gamma, mode);
        let (ma, mb) = (component_matrices(&a.model()), component_matrices(&b.model()));
        for (h, (x, y)) in ma.iter().zip(&mb).enumerate() {
            for (p, q) in x.iter().zip(y) {
                if (p - q).abs() > 1e-8 * p.abs().max(1.0) {
                    return Err(format!("seed {seed} sweep {sweep}: component {h} entries {p} vs {q}"));
                }
            }
        }
        if (a.intercept() - b.intercept()).abs() > 1e-8 * a.intercept().abs().max(1.0) {
            return Err(format!("seed {seed} sweep {sweep}: intercepts differ"));
        }
    }
    Ok(())
}

/// A component started with an all-zero loading never leaves zero.
pub fn zero_loading_stays_zero(seed: u64) -> Check {
    let inst = random_instance(seed);
    let problem = Problem::new(&inst.data);
    let mut p = Params::of(&inst.start);
    let h = (seed as usize) % p.lambda.len();
    p.beta[h].iter_mut().for_each(|b| *b = 0.0);
    let start = p.to_model();
    let mut ws = Workspace::new(problem.design(), &start).map_err(|e| e.to_string())?;
    for sweep in 0..20 {
        ws.sweep(inst.gamma, if sweep < 3 { SweepMode::Full } else { SweepMode::Active });
        if ws.loading(h).iter().any(|b| *b != 0.0) {
            return Err(format!("seed {seed} sweep {sweep}: component {h} left zero"));
        }
    }
    let config = FitConfig { rank: start.rank(), gamma: inst.gamma, restarts: 1, ..FitConfig::default() };
    let (model, _) = problem.descend(&start, &config, 0).map_err(|e| e.to_string())?;
    if !model.components()[h].is_dead() {
        return Err(format!("seed {seed}: descent revived component {h}"));
    }
    Ok(())
}

/// With one component per edge and loadings fixed at `e_u + e_v`, scale
/// sweeps reproduce lasso coordinate descent on doubled edge weights.
pub fn scale_sweeps_match_lasso(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = 4;
    let n = rng.random_range(8..=25);
    let networks: Vec<SymmetricNetwork> = (0..n).map(|_| random_network(&mut rng, v)).collect();
    let responses: Vec<f64> = networks
        .iter()
        .map(|w| 1.5 * w.get(1, 0) - 2.0 * w.get(3, 2) + rng.random_range(-0.5..0.5))
        .collect();
    let data = NetworkDataset::new(networks, responses).unwrap();
    let k = v * (v - 1) / 2;
    let start_scales: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let start_intercept = rng.random_range(-1.0..1.0);
    let comps = (0..k)
        .map(|j| {
            let e = Edge::from_index(j);
            let mut loading = vec![0.0; v];
            loading[e.row] = 1.0;
            loading[e.col] = 1.0;
            Component { scale: start_scales[j], loading }
        })
        .collect();
    let model = SblModel::new(start_intercept, comps).unwrap();
    let gamma = rng.random_range(0.0..0.3);

    let problem = Problem::new(&data);
    let mut ws = Workspace::new(problem.design(), &model).map_err(|e| e.to_string())?;
    let design = vectorize(&data).scaled(2.0);
    let mut lasso = LassoState::new(&design, data.responses())
        .map_err(|e| e.to_string())?
        .warm(start_intercept, &start_scales);
    for sweep in 0..30 {
        ws.sweep_scales(gamma);
        lasso.sweep(gamma);
        for j in 0..k {
            let (a, b) = (ws.scale(j), lasso.coefficients[j]);
            if (a - b).abs() > 1e-10 {
                return Err(format!("seed {seed} sweep {sweep}: scale {j} is {a}, lasso {b}"));
            }
        }
        if (ws.intercept() - lasso.intercept).abs() > 1e-10 {
            return Err(format!("seed {seed} sweep {sweep}: intercept {} vs {}", ws.intercept(), lasso.intercept));
        }
    }
    Ok(())
}

/// At and above the estimated null penalty the fit has no active
/// component and the intercept is the response mean.
pub fn null_model_above_gamma_max(seed: u64) -> Check {
    let inst = random_instance(seed);
    let config = FitConfig { rank: inst.start.rank(), restarts: 3, seed, ..FitConfig::default() };
    let gmax = estimate_gamma_max(&inst.data, &config).map_err(|e| e.to_string())?;
    let problem = Problem::new(&inst.data);
    for factor in [1.0, 1.5, 4.0] {
        let (model, _) = problem.fit(&config.with_gamma(gmax * factor)).map_err(|e| e.to_string())?;
        if model.active_components() != 0 {
            return Err(format!("seed {seed}: {} components active at {factor} x gamma_max", model.active_components()));
        }
        let mean = inst.data.response_mean();
        if (model.intercept() - mean).abs() > 1e-10 * mean.abs().max(1.0) {
            return Err(format!("seed {seed}: intercept {} but mean response {mean}", model.intercept()));
        }
    }
    Ok(())
}
