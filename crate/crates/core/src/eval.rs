//! Subgraph extraction, recovery scores and replicate studies.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{lasso_gamma_max, lasso_path, vectorize};
use crate::error::{Result, SblError};
use crate::exec::{map_indexed, mix_seed, Execution};
use crate::is_nonzero;
use crate::model::SblModel;
use crate::network::{edge_count, Edge};
use crate::simulate::{generate, train_test_split, SimulationConfig, SIGNAL_BASES};
use crate::solver::{fit_path, geometric_path, select_gamma, FitConfig, Problem, SelectionRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub edge: Edge,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSubgraph {
    pub component_index: usize,
    pub nodes: Vec<usize>,
    /// Clique over `nodes`; weight `lambda_h * beta_hu * beta_hv`.
    pub edges: Vec<WeightedEdge>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubgraphSet {
    pub components: Vec<ComponentSubgraph>,
    pub union_edges: BTreeSet<Edge>,
}

/// Reads each non-dead component as a weighted clique.
pub fn extract_subgraphs(model: &SblModel) -> SubgraphSet {
    let mut set = SubgraphSet::default();
    for (h, c) in model.components().iter().enumerate() {
        if c.is_dead() {
            continue;
        }
        let nodes = c.support();
        let mut edges = Vec::new();
        for (a, &u) in nodes.iter().enumerate() {
            for &v in &nodes[..a] {
                let edge = Edge::new(u, v);
                edges.push(WeightedEdge {
                    edge,
                    weight: c.scale * c.loading[u] * c.loading[v],
                });
                set.union_edges.insert(edge);
            }
        }
        if !edges.is_empty() {
            edges.sort_by_key(|e| e.edge);
            set.components.push(ComponentSubgraph {
                component_index: h,
                nodes,
                edges,
            });
        }
    }
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub tpr: f64,
    pub fpr: f64,
    pub mse: f64,
}

/// Edge-level true and false positive rates against `truth`.
pub fn score<'a, I>(selected: I, truth: &BTreeSet<Edge>, node_count: usize, test_mse: f64) -> Result<RecoveryScore>
where
    I: IntoIterator<Item = &'a Edge>,
{
    if truth.is_empty() {
        return Err(SblError::InvalidConfig("truth edge set is empty".into()));
    }
    if node_count < 2 {
        return Err(SblError::InvalidConfig("need at least 2 nodes".into()));
    }
    let selected: BTreeSet<Edge> = selected.into_iter().copied().collect();
    let hits = selected.intersection(truth).count();
    let false_hits = selected.len() - hits;
    let negatives = edge_count(node_count) - truth.len();
    let fpr = if negatives == 0 {
        0.0
    } else {
        false_hits as f64 / negatives as f64
    };
    Ok(RecoveryScore {
        tpr: hits as f64 / truth.len() as f64,
        fpr,
        mse: test_mse,
    })
}

/// `(1/m) sum (y - yhat)^2`
pub fn mse(predictions: &[f64], responses: &[f64]) -> Result<f64> {
    if predictions.len() != responses.len() {
        return Err(SblError::DimensionMismatch {
            expected: responses.len(),
            found: predictions.len(),
        });
    }
    if responses.is_empty() {
        return Err(SblError::EmptyDataset);
    }
    Ok(predictions
        .iter()
        .zip(responses)
        .map(|(p, y)| (y - p).powi(2))
        .sum::<f64>()
        / responses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sbl,
    Lasso,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sbl => "sbl",
            Method::Lasso => "lasso",
        })
    }
}

impl FromStr for Method {
    type Err = SblError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sbl" => Ok(Method::Sbl),
            "lasso" => Ok(Method::Lasso),
            other => Err(SblError::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Template; each replicate replaces the seed.
    pub simulation: SimulationConfig,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    pub rank: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub gamma_count: usize,
    pub train_fraction: f64,
    pub rule: SelectionRule,
    pub lasso_tolerance: f64,
    pub execution: Execution,
}

impl StudyConfig {
    /// 10% response noise, threshold rule.
    pub fn high_snr(seed: u64) -> Self {
        StudyConfig {
            simulation: SimulationConfig::high_snr(seed),
            methods: vec![Method::Sbl, Method::Lasso],
            replications: 20,
            seed,
            rank: 5,
            restarts: 10,
            tolerance: 1e-5,
            gamma_count: 50,
            train_fraction: 0.5,
            rule: SelectionRule::Threshold(0.03),
            lasso_tolerance: 1e-9,
            execution: Execution::default(),
        }
    }

    /// 100% response noise, minimum-error rule.
    pub fn low_snr(seed: u64) -> Self {
        StudyConfig {
            simulation: SimulationConfig::low_snr(seed),
            rule: SelectionRule::MinMse,
            ..Self::high_snr(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(SblError::InvalidConfig("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(SblError::InvalidConfig("no methods requested".into()));
        }
        if self.gamma_count < 2 {
            return Err(SblError::InvalidConfig("path needs at least two points".into()));
        }
        self.simulation.validate()?;
        self.fit_config(0).validate()
    }

    fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            rank: self.rank,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed,
            execution: self.execution,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub gamma: f64,
    pub score: RecoveryScore,
    pub selected_edges: Vec<Edge>,
    /// Clique edges of each signal basis, in basis order.
    pub signal_edges_by_basis: Vec<Vec<Edge>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replications: usize,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub tpr_mean: f64,
    pub tpr_sd: f64,
    pub fpr_mean: f64,
    pub fpr_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub rows: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl StudySummary {
    pub fn row(&self, method: Method) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Replicate `r` uses seed `seed + r` for data generation; the split and the
/// fits use streams derived from it.
pub fn replicate_study(config: &StudyConfig) -> Result<StudySummary> {
    config.validate()?;
    let per_rep = map_indexed(config.execution, config.replications, |r| {
        let seed = config.seed.wrapping_add(r as u64);
        run_replicate(config, r, seed).map_err(|e| SblError::ReplicateFailed {
            replicate: r,
            seed,
            source: Box::new(e),
        })
    });
    let mut records = Vec::new();
    for rep in per_rep {
        records.extend(rep?);
    }
    let rows = config
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
            let col = |f: fn(&RecoveryScore) -> f64| mean_sd(&mine.iter().map(|r| f(&r.score)).collect::<Vec<_>>());
            let (mse_mean, mse_sd) = col(|s| s.mse);
            let (tpr_mean, tpr_sd) = col(|s| s.tpr);
            let (fpr_mean, fpr_sd) = col(|s| s.fpr);
            MethodSummary {
                method,
                replications: mine.len(),
                mse_mean,
                mse_sd,
                tpr_mean,
                tpr_sd,
                fpr_mean,
                fpr_sd,
            }
        })
        .collect();
    Ok(StudySummary { rows, records })
}

fn run_replicate(config: &StudyConfig, r: usize, seed: u64) -> Result<Vec<ReplicateRecord>> {
    let sim = SimulationConfig {
        seed,
        ..config.simulation.clone()
    };
    let (data, truth) = generate(&sim)?;
    let (train, test) = train_test_split(&data, config.train_fraction, mix_seed(seed, 1))?;
    let v = data.node_count();
    let train_mean = train.response_mean();
    let null_mse = mse(&vec![train_mean; test.len()], test.responses())?;
    let by_basis: Vec<Vec<Edge>> = (0..SIGNAL_BASES)
        .map(|h| truth.basis_edges(h).into_iter().collect())
        .collect();

    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let (gamma, selected, test_mse) = match method {
            Method::Sbl => {
                let problem = Problem::new(&train);
                let fit_cfg = config.fit_config(mix_seed(seed, 2));
                let gmax = crate::solver::estimate_gamma_max_on(&problem, &fit_cfg)?;
                let gammas = geometric_path(gmax, config.gamma_count);
                let points = fit_path(&problem, &fit_cfg, &gammas, Some(&test))?;
                let pairs: Vec<(f64, f64)> = points
                    .iter()
                    .map(|p| (p.gamma, p.test_mse.expect("test set given")))
                    .collect();
                let sel = select_gamma(&pairs, config.rule, null_mse)?;
                let chosen = &points[sel.index];
                let edges = extract_subgraphs(&chosen.model).union_edges;
                (sel.gamma, edges, pairs[sel.index].1)
            }
            Method::Lasso => {
                let x_train = vectorize(&train);
                let x_test = vectorize(&test);
                let gmax = lasso_gamma_max(&x_train, train.responses());
                // descending so each warm start is the sparser neighbour
                let mut gammas = geometric_path(gmax.max(1e-12), config.gamma_count);
                gammas.reverse();
                let path = lasso_path(&x_train, train.responses(), &gammas, config.lasso_tolerance)?;
                let pairs: Vec<(f64, f64)> = path
                    .iter()
                    .map(|p| mse(&p.fit.predict(&x_test), test.responses()).map(|m| (p.gamma, m)))
                    .collect::<Result<_>>()?;
                let sel = select_gamma(&pairs, config.rule, null_mse)?;
                let edges: BTreeSet<Edge> = path[sel.index].fit.selected_edges().into_iter().collect();
                (sel.gamma, edges, pairs[sel.index].1)
            }
        };
        let score = score(&selected, &truth.signal_edges, v, test_mse)?;
        out.push(ReplicateRecord {
            replicate: r,
            seed,
            method,
            gamma,
            score,
            selected_edges: selected.into_iter().collect(),
            signal_edges_by_basis: by_basis.clone(),
        });
    }
    Ok(out)
}

/// True when the selection contains the single-edge signal and at least
/// `fraction` of the edges of the two larger signal cliques.
pub fn recovers_signal(record: &ReplicateRecord, fraction: f64) -> bool {
    let selected: BTreeSet<Edge> = record.selected_edges.iter().copied().collect();
    let bases = &record.signal_edges_by_basis;
    let single = bases[0].iter().all(|e| selected.contains(e));
    let larger: BTreeSet<Edge> = bases[1..].iter().flatten().copied().collect();
    let hit = larger.iter().filter(|e| selected.contains(e)).count();
    single && hit as f64 >= fraction * larger.len() as f64
}

/// Nonzero entries of a model's coefficient matrix, for callers that want
/// the combined support rather than per-component cliques.
pub fn combined_support(model: &SblModel) -> BTreeSet<Edge> {
    let b = model.coefficient_matrix();
    let v = model.node_count();
    let mut out = BTreeSet::new();
    for u in 0..v {
        for w in 0..u {
            if is_nonzero(b[(u, w)]) {
                out.insert(Edge::new(u, w));
            }
        }
    }
    out
}
