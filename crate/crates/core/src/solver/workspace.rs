//! Cached state for coordinate descent on one dataset.
//!
//! [`Design`] holds everything that depends only on the data: the networks
//! in edge-major layout and the per-node gram blocks
//! `M_u = sum_i W_i[.u] W_i[u.]`. It is immutable and shared by every
//! restart and penalty value. [`Workspace`] holds one iterate together with
//! the per-subject caches the closed-form updates need.

use crate::error::{Result, SblError};
use crate::is_nonzero;
use crate::model::{pair_abs_sum, Component, SblModel};
use crate::network::NetworkDataset;

use super::soft_threshold;

/// Curvatures at or below this make an update degenerate; the coordinate
/// is then set to zero.
pub const DEGENERATE_CURVATURE: f64 = 1e-12;

/// Data-only precomputation shared across fits.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    v: usize,
    responses: Vec<f64>,
    /// `edges[(u * v + w) * n + i] = W_i[u][w]`
    edges: Vec<f64>,
    /// `gram[(u * v + a) * v + b] = M_u[a][b]`
    gram: Vec<f64>,
}

impl Design {
    pub fn new(data: &NetworkDataset) -> Self {
        let n = data.len();
        let v = data.node_count();
        let mut edges = vec![0.0; v * v * n];
        for (i, w) in data.networks().iter().enumerate() {
            let m = w.weights();
            for a in 0..v {
                for b in 0..v {
                    edges[(a * v + b) * n + i] = m[(a, b)];
                }
            }
        }
        let mut gram = vec![0.0; v * v * v];
        for u in 0..v {
            for a in 0..v {
                if a == u {
                    continue;
                }
                let ra = &edges[(u * v + a) * n..(u * v + a + 1) * n];
                for b in a..v {
                    if b == u {
                        continue;
                    }
                    let rb = &edges[(u * v + b) * n..(u * v + b + 1) * n];
                    let s = dot(ra, rb);
                    gram[(u * v + a) * v + b] = s;
                    gram[(u * v + b) * v + a] = s;
                }
            }
        }
        Design {
            n,
            v,
            responses: data.responses().to_vec(),
            edges,
            gram,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.v
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Entry `(a, b)` of `M_u`.
    pub fn gram(&self, u: usize, a: usize, b: usize) -> f64 {
        self.gram[(u * self.v + a) * self.v + b]
    }

    /// Bytes held by the gram blocks; grows as `V^3`.
    pub fn gram_bytes(&self) -> usize {
        self.gram.len() * std::mem::size_of::<f64>()
    }

    /// Values `W_i[u][w]` over subjects `i`.
    #[inline]
    fn edge(&self, u: usize, w: usize) -> &[f64] {
        let start = (u * self.v + w) * self.n;
        &self.edges[start..start + self.n]
    }

    /// `beta' W_i beta` for every subject, written into `out`.
    fn bilinear_into(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for u in 0..self.v {
            if beta[u] == 0.0 {
                continue;
            }
            for w in 0..u {
                if beta[w] == 0.0 {
                    continue;
                }
                axpy(2.0 * beta[u] * beta[w], self.edge(u, w), out);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lifecycle of a component during descent.
///
/// A component whose scale is thresholded to zero is frozen: its loading is
/// kept so the scale may revive, but loading updates are skipped. If the
/// scale is still zero at the next sweep the loading is zeroed and the
/// component is dead for the rest of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentState {
    Live,
    Frozen,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Every parameter.
    Full,
    /// Only currently nonzero loadings; scales of non-dead components and
    /// the intercept are always updated.
    Active,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    /// Some parameter went from zero to nonzero.
    pub activated: bool,
}

/// One iterate plus the caches its coordinate updates consume.
#[derive(Debug, Clone)]
pub struct Workspace<'d> {
    design: &'d Design,
    rank: usize,
    alpha: f64,
    lambda: Vec<f64>,
    /// `beta[h * v + u]`
    beta: Vec<f64>,
    /// `features[h * n + i] = beta_h' W_i beta_h`
    features: Vec<f64>,
    /// `y_i - alpha - sum_h lambda_h features[h, i]`
    residual: Vec<f64>,
    states: Vec<ComponentState>,
    scratch: Vec<f64>,
}

impl<'d> Workspace<'d> {
    pub fn new(design: &'d Design, model: &SblModel) -> Result<Self> {
        if model.node_count() != design.v {
            return Err(SblError::DimensionMismatch {
                expected: design.v,
                found: model.node_count(),
            });
        }
        let rank = model.rank();
        let mut beta = Vec::with_capacity(rank * design.v);
        let mut lambda = Vec::with_capacity(rank);
        let mut states = Vec::with_capacity(rank);
        for c in model.components() {
            beta.extend_from_slice(&c.loading);
            lambda.push(c.scale);
            states.push(if c.scale != 0.0 {
                ComponentState::Live
            } else if c.loading.iter().all(|b| *b == 0.0) {
                ComponentState::Dead
            } else {
                ComponentState::Frozen
            });
        }
        let mut ws = Workspace {
            design,
            rank,
            alpha: model.intercept(),
            lambda,
            beta,
            features: vec![0.0; rank * design.n],
            residual: vec![0.0; design.n],
            states,
            scratch: vec![0.0; design.n],
        };
        ws.refresh();
        Ok(ws)
    }

    pub fn design(&self) -> &'d Design {
        self.design
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn state(&self, h: usize) -> ComponentState {
        self.states[h]
    }

    pub fn intercept(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self, h: usize) -> f64 {
        self.lambda[h]
    }

    pub fn loading(&self, h: usize) -> &[f64] {
        let v = self.design.v;
        &self.beta[h * v..(h + 1) * v]
    }

    /// Cached `beta_h' W_i beta_h`.
    pub fn feature(&self, h: usize, i: usize) -> f64 {
        self.features[h * self.design.n + i]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    /// Current iterate as a model. Components with zero scale are reported
    /// in the canonical dead state.
    pub fn model(&self) -> SblModel {
        let comps = (0..self.rank)
            .map(|h| {
                if self.lambda[h] == 0.0 {
                    Component::dead(self.design.v)
                } else {
                    Component {
                        scale: self.lambda[h],
                        loading: self.loading(h).to_vec(),
                    }
                }
            })
            .collect();
        SblModel::new(self.alpha, comps).expect("workspace iterate is a valid model")
    }

    /// Iterate exactly as stored, including loadings of frozen components.
    pub fn raw_model(&self) -> SblModel {
        let comps = (0..self.rank)
            .map(|h| Component {
                scale: self.lambda[h],
                loading: self.loading(h).to_vec(),
            })
            .collect();
        SblModel::new(self.alpha, comps).expect("workspace iterate is a valid model")
    }

    /// Recomputes features and residuals from scratch.
    pub fn refresh(&mut self) {
        let (n, v) = (self.design.n, self.design.v);
        for h in 0..self.rank {
            let (beta, features) = (&self.beta[h * v..(h + 1) * v], &mut self.features[h * n..(h + 1) * n]);
            self.design.bilinear_into(beta, features);
        }
        self.recompute_residuals();
    }

    fn recompute_residuals(&mut self) {
        let n = self.design.n;
        for i in 0..n {
            let mut fit = self.alpha;
            for h in 0..self.rank {
                fit += self.lambda[h] * self.features[h * n + i];
            }
            self.residual[i] = self.design.responses[i] - fit;
        }
    }

    /// Largest relative gap between cached and freshly evaluated features.
    pub fn max_cache_drift(&self) -> f64 {
        let n = self.design.n;
        let mut fresh = vec![0.0; n];
        let mut worst = 0.0f64;
        for h in 0..self.rank {
            self.design.bilinear_into(self.loading(h), &mut fresh);
            for i in 0..n {
                let cached = self.features[h * n + i];
                let gap = (cached - fresh[i]).abs() / fresh[i].abs().max(1.0);
                worst = worst.max(gap);
            }
        }
        worst
    }

    /// `(1/2n) sum r_i^2 + gamma * sum_h |lambda_h| sum_{u>v} |beta_hu beta_hv|`
    pub fn loss(&self, gamma: f64) -> f64 {
        let n = self.design.n as f64;
        let rss: f64 = self.residual.iter().map(|r| r * r).sum();
        rss / (2.0 * n) + gamma * self.penalty()
    }

    pub fn penalty(&self) -> f64 {
        (0..self.rank)
            .filter(|&h| self.lambda[h] != 0.0)
            .map(|h| self.lambda[h].abs() * pair_abs_sum(self.loading(h)))
            .sum()
    }

    /// `scratch_i = W_i[u.] beta_h`
    fn row_product(&mut self, h: usize, u: usize) {
        let v = self.design.v;
        self.scratch.iter_mut().for_each(|x| *x = 0.0);
        for w in 0..v {
            let b = self.beta[h * v + w];
            if w == u || b == 0.0 {
                continue;
            }
            axpy(b, self.design.edge(u, w), &mut self.scratch);
        }
    }

    /// `beta_h' M_u beta_h`
    fn gram_form(&self, h: usize, u: usize) -> f64 {
        let v = self.design.v;
        let beta = self.loading(h);
        let mut total = 0.0;
        for a in 0..v {
            if beta[a] == 0.0 || a == u {
                continue;
            }
            let row = &self.design.gram[(u * v + a) * v..(u * v + a + 1) * v];
            let mut s = 0.0;
            for b in 0..v {
                s += row[b] * beta[b];
            }
            total += beta[a] * s;
        }
        total
    }

    /// Linear and quadratic coefficients of the smooth part as a function of
    /// `beta_hu`: the smooth loss is `const - a*x + d*x^2/2`, so its
    /// derivative is `-a + d * beta_hu`.
    pub fn smooth_partials(&mut self, h: usize, u: usize) -> (f64, f64) {
        self.row_product(h, u);
        self.partials_from_scratch(h, u)
    }

    fn partials_from_scratch(&self, h: usize, u: usize) -> (f64, f64) {
        let n = self.design.n;
        let lam = self.lambda[h];
        if lam == 0.0 {
            return (0.0, 0.0);
        }
        let old = self.beta[h * self.design.v + u];
        // e_i^(h) - lam * beta' W_i^(u) beta = r_i + 2 lam old s_i
        let mut acc = 0.0;
        for i in 0..n {
            let s = self.scratch[i];
            acc += (self.residual[i] + 2.0 * lam * old * s) * s;
        }
        let a = 2.0 * lam / n as f64 * acc;
        let d = 4.0 * lam * lam / n as f64 * self.gram_form(h, u);
        (a, d)
    }

    /// Soft-threshold weight on `|beta_hu|`: `gamma |lambda_h| sum_{v != u} |beta_hv|`.
    pub fn beta_threshold(&self, h: usize, u: usize, gamma: f64) -> f64 {
        let beta = self.loading(h);
        let others: f64 = beta.iter().map(|b| b.abs()).sum::<f64>() - beta[u].abs();
        gamma * self.lambda[h].abs() * others.max(0.0)
    }

    /// Exact minimizer over `beta_hu` with everything else fixed. Caches are
    /// updated; returns the new value.
    pub fn update_beta_entry(&mut self, h: usize, u: usize, gamma: f64) -> f64 {
        let (n, v) = (self.design.n, self.design.v);
        let old = self.beta[h * v + u];
        let lam = self.lambda[h];
        self.row_product(h, u);
        let (a, d) = self.partials_from_scratch(h, u);
        let new = if d <= DEGENERATE_CURVATURE {
            0.0
        } else {
            soft_threshold(a, self.beta_threshold(h, u, gamma)) / d
        };
        let delta = new - old;
        if delta != 0.0 {
            self.beta[h * v + u] = new;
            let feats = &mut self.features[h * n..(h + 1) * n];
            for i in 0..n {
                let df = 2.0 * delta * self.scratch[i];
                feats[i] += df;
                self.residual[i] -= lam * df;
            }
        }
        new
    }

    /// `(c_h, b_h)`: covariance of the partial residual with the component
    /// feature, and the feature's second moment.
    pub fn lambda_partials(&self, h: usize) -> (f64, f64) {
        let n = self.design.n;
        let lam = self.lambda[h];
        let feats = &self.features[h * n..(h + 1) * n];
        let (mut c, mut b) = (0.0, 0.0);
        for i in 0..n {
            let q = feats[i];
            c += q * (self.residual[i] + lam * q);
            b += q * q;
        }
        (c / n as f64, b / n as f64)
    }

    /// Exact minimizer over `lambda_h`; returns the new value.
    pub fn update_lambda(&mut self, h: usize, gamma: f64) -> f64 {
        let n = self.design.n;
        let (c, b) = self.lambda_partials(h);
        let new = if b <= DEGENERATE_CURVATURE {
            0.0
        } else {
            soft_threshold(c, gamma * pair_abs_sum(self.loading(h))) / b
        };
        let delta = new - self.lambda[h];
        if delta != 0.0 {
            self.lambda[h] = new;
            let feats = &self.features[h * n..(h + 1) * n];
            for i in 0..n {
                self.residual[i] -= delta * feats[i];
            }
        }
        new
    }

    /// Exact minimizer over the intercept.
    pub fn update_alpha(&mut self) -> f64 {
        let n = self.design.n as f64;
        let shift = self.residual.iter().sum::<f64>() / n;
        self.alpha += shift;
        for r in &mut self.residual {
            *r -= shift;
        }
        self.alpha
    }

    /// Scale update inside a sweep, applying the freeze/death lifecycle.
    fn lifecycle_lambda(&mut self, h: usize, gamma: f64) -> bool {
        let v = self.design.v;
        let n = self.design.n;
        match self.states[h] {
            ComponentState::Dead => false,
            ComponentState::Live => {
                if self.update_lambda(h, gamma) == 0.0 {
                    self.states[h] = ComponentState::Frozen;
                }
                false
            }
            ComponentState::Frozen => {
                if self.update_lambda(h, gamma) != 0.0 {
                    self.states[h] = ComponentState::Live;
                    true
                } else {
                    self.states[h] = ComponentState::Dead;
                    self.beta[h * v..(h + 1) * v].iter_mut().for_each(|b| *b = 0.0);
                    self.features[h * n..(h + 1) * n].iter_mut().for_each(|q| *q = 0.0);
                    false
                }
            }
        }
    }

    /// One cycle: loadings of each live component by node, then all scales,
    /// then the intercept.
    pub fn sweep(&mut self, gamma: f64, mode: SweepMode) -> SweepOutcome {
        if mode == SweepMode::Full {
            self.refresh();
        }
        let v = self.design.v;
        let mut activated = false;
        for h in 0..self.rank {
            if self.states[h] != ComponentState::Live {
                continue;
            }
            for u in 0..v {
                let old = self.beta[h * v + u];
                if mode == SweepMode::Active && !is_nonzero(old) {
                    continue;
                }
                let new = self.update_beta_entry(h, u, gamma);
                activated |= !is_nonzero(old) && is_nonzero(new);
            }
        }
        for h in 0..self.rank {
            activated |= self.lifecycle_lambda(h, gamma);
        }
        self.update_alpha();
        SweepOutcome { activated }
    }

    /// Scales then intercept, loadings held fixed.
    pub fn sweep_scales(&mut self, gamma: f64) {
        for h in 0..self.rank {
            self.update_lambda(h, gamma);
        }
        self.update_alpha();
    }

    /// Nonzero pattern of all loadings and scales.
    pub fn support(&self) -> Vec<bool> {
        self.beta
            .iter()
            .chain(self.lambda.iter())
            .map(|x| is_nonzero(*x))
            .collect()
    }
}
