//! Synthetic clique-signal benchmark.
//!
//! Networks are random mixtures of `basis_count` clique patterns `q_h q_h'`
//! (`q_h` binary with `h + 1` ones) plus symmetric Gaussian noise; the
//! response is the sum of the bilinear forms of the first three patterns
//! plus noise scaled to the spread of the conditional mean.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::network::{Edge, NetworkDataset, SymmetricNetwork};

/// Bases that enter the response.
pub const SIGNAL_BASES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub node_count: usize,
    pub sample_size: usize,
    pub basis_count: usize,
    /// Response noise sd as a fraction of the sd of the conditional means.
    pub noise_fraction: f64,
    /// Sd of the off-diagonal network noise.
    pub network_noise_sd: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            node_count: 20,
            sample_size: 100,
            basis_count: 10,
            noise_fraction: 0.10,
            network_noise_sd: 0.1,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn high_snr(seed: u64) -> Self {
        SimulationConfig { seed, ..Default::default() }
    }

    pub fn low_snr(seed: u64) -> Self {
        SimulationConfig {
            noise_fraction: 1.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SblError::InvalidConfig(m));
        if self.node_count < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.node_count));
        }
        if self.sample_size == 0 {
            return bad("sample size must be positive".into());
        }
        if self.basis_count < SIGNAL_BASES || self.basis_count + 1 > self.node_count {
            return bad(format!(
                "basis count {} must lie in [{SIGNAL_BASES}, {}]",
                self.basis_count,
                self.node_count - 1
            ));
        }
        if !(self.noise_fraction >= 0.0 && self.network_noise_sd >= 0.0) {
            return bad("noise levels must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `basis_vectors[h]` has exactly `h + 2` ones (0-based `h`).
    pub basis_vectors: Vec<Vec<u8>>,
    /// `loadings[i][h]`
    pub loadings: Vec<Vec<f64>>,
    pub signal_edges: BTreeSet<Edge>,
}

impl GroundTruth {
    /// Clique edges of basis `h`.
    pub fn basis_edges(&self, h: usize) -> BTreeSet<Edge> {
        clique_edges(&self.basis_vectors[h])
    }
}

fn clique_edges(q: &[u8]) -> BTreeSet<Edge> {
    let nodes = support_of(q);
    let mut out = BTreeSet::new();
    for (a, &u) in nodes.iter().enumerate() {
        for &w in &nodes[..a] {
            out.insert(Edge::new(u, w));
        }
    }
    out
}

fn support_of(q: &[u8]) -> Vec<usize> {
    q.iter().enumerate().filter(|(_, x)| **x == 1).map(|(u, _)| u).collect()
}

fn mixture_on_supports(v: usize, supports: &[Vec<usize>], loadings: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(v, v);
    for (nodes, &l) in supports.iter().zip(loadings) {
        for &a in nodes {
            for &b in nodes {
                if a != b {
                    m[(a, b)] += l;
                }
            }
        }
    }
    m
}

/// Noise-free `sum_h loadings[h] * q_h q_h'` with the diagonal zeroed.
pub fn basis_mixture(basis_vectors: &[Vec<u8>], loadings: &[f64]) -> DMatrix<f64> {
    let v = basis_vectors.first().map_or(0, |q| q.len());
    let supports: Vec<Vec<usize>> = basis_vectors.iter().map(|q| support_of(q)).collect();
    mixture_on_supports(v, &supports, loadings)
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Draws one synthetic dataset and its ground truth.
pub fn generate(config: &SimulationConfig) -> Result<(NetworkDataset, GroundTruth)> {
    config.validate()?;
    let v = config.node_count;
    let n = config.sample_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let basis_vectors: Vec<Vec<u8>> = (0..config.basis_count)
        .map(|h| {
            let mut q = vec![0u8; v];
            for u in sample(&mut rng, v, h + 2) {
                q[u] = 1;
            }
            q
        })
        .collect();
    let supports: Vec<Vec<usize>> = basis_vectors.iter().map(|q| support_of(q)).collect();

    let noise = Normal::new(0.0, config.network_noise_sd)
        .map_err(|e| SblError::InvalidConfig(e.to_string()))?;
    let mut networks = Vec::with_capacity(n);
    let mut loadings = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    for _ in 0..n {
        let load: Vec<f64> = (0..config.basis_count)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut m = mixture_on_supports(v, &supports, &load);
        for a in 0..v {
            for b in 0..a {
                let e = noise.sample(&mut rng);
                m[(a, b)] += e;
                m[(b, a)] += e;
            }
        }
        let w = SymmetricNetwork::new(m)?;
        let mean: f64 = basis_vectors[..SIGNAL_BASES]
            .iter()
            .map(|q| {
                let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
                w.bilinear(&qf)
            })
            .sum();
        networks.push(w);
        loadings.push(load);
        means.push(mean);
    }

    let sigma = config.noise_fraction * sample_sd(&means);
    let responses: Vec<f64> = means
        .iter()
        .map(|mu| {
            let eps: f64 = if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            mu + eps
        })
        .collect();

    let signal_edges = basis_vectors[..SIGNAL_BASES]
        .iter()
        .flat_map(|q| clique_edges(q))
        .collect();
    let truth = GroundTruth {
        basis_vectors,
        loadings,
        signal_edges,
    };
    Ok((NetworkDataset::new(networks, responses)?, truth))
}

/// Random disjoint split with `round(train_fraction * n)` training subjects.
pub fn train_test_split(
    data: &NetworkDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(NetworkDataset, NetworkDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SblError::InvalidConfig(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n = data.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(SblError::InvalidConfig(format!(
            "train fraction {train_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perm = sample(&mut rng, n, n).into_vec();
    let (train_idx, test_idx) = perm.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((data.select(&train_idx)?, data.select(&test_idx)?))
}
