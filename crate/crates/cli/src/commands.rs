use std::path::{Path, PathBuf};

use sbl_core::baseline::{lasso_fit, lasso_gamma_max, lasso_path, vectorize};
use sbl_core::eval::{extract_subgraphs, mse, recovers_signal, replicate_study, score, Method, StudyConfig};
use sbl_core::exec::mix_seed;
use sbl_core::network::edge_count;
use sbl_core::simulate::{generate, train_test_split, SimulationConfig};
use sbl_core::solver::{
    estimate_gamma_max, estimate_gamma_max_on, fit_path, geometric_path, select_gamma, FitConfig, FitReport, Problem,
};
use sbl_core::{Edge, Execution, NetworkDataset};
use serde::Serialize;

use crate::cli::*;
use crate::error::{CliError, Result};
use crate::files::*;

/// Fraction of the larger signal cliques that counts as recovered in study
/// outputs.
pub const RECOVERY_FRACTION: f64 = 0.8;

pub fn run(cli: Cli) -> Result<()> {
    let execution = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    #[cfg(feature = "parallel")]
    if let Some(jobs) = cli.jobs.filter(|&j| j > 1) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
        return pool.install(|| dispatch(cli.command, execution));
    }
    dispatch(cli.command, execution)
}

fn dispatch(command: Command, execution: Execution) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(&a).map(|_| ()),
        Command::Fit(a) => fit(&a, execution).map(|_| ()),
        Command::Path(a) => path(&a, execution).map(|_| ()),
        Command::Eval(a) => eval(&a).map(|_| ()),
        Command::Study(a) => study(&a, execution).map(|_| ()),
        Command::Lasso(LassoCommand::Fit(a)) => lasso_fit_cmd(&a).map(|_| ()),
        Command::Lasso(LassoCommand::Path(a)) => lasso_path_cmd(&a).map(|_| ()),
    }
}

fn require_fraction(train_frac: f64) -> Result<()> {
    if train_frac > 0.0 && train_frac < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--train-frac {train_frac} must lie strictly between 0 and 1")))
    }
}

fn require_path_length(gammas: usize) -> Result<()> {
    if gammas >= 2 {
        Ok(())
    } else {
        Err(CliError::Usage("--gammas must be at least 2".into()))
    }
}

pub fn simulation_config(nodes: usize, samples: usize, snr: Snr, bases: Option<usize>, seed: u64) -> SimulationConfig {
    SimulationConfig {
        node_count: nodes,
        sample_size: samples,
        basis_count: bases.unwrap_or(10.min(nodes.saturating_sub(1))),
        noise_fraction: snr.noise_fraction(),
        seed,
        ..SimulationConfig::default()
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<PathBuf> {
    let config = simulation_config(a.nodes, a.samples, a.snr, a.bases, a.seed);
    config.validate()?;
    let (data, truth) = generate(&config)?;
    let out = StagedDir::new(&a.out)?;
    stage_dataset(&out, &data, Some(a.seed))?;
    out.write("truth.csv", &truth_csv(&truth, Some(a.seed))?)?;
    let dir = out.commit()?;
    println!("wrote {} subjects on {} nodes to {}", data.len(), data.node_count(), dir.display());
    Ok(dir)
}

fn fit_config(s: &SolverArgs, gamma: f64, execution: Execution) -> FitConfig {
    FitConfig {
        rank: s.rank,
        gamma,
        tolerance: s.tol,
        max_iterations: s.max_iterations,
        restarts: s.restarts,
        seed: s.seed,
        execution,
        ..FitConfig::default()
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    format_version: u32,
    tool_version: &'a str,
    seed: u64,
    gamma: f64,
    #[serde(flatten)]
    report: &'a FitReport,
}

pub fn report_path(model_path: &Path) -> PathBuf {
    let stem = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    model_path.with_file_name(format!("{stem}.report.json"))
}

pub fn fit(a: &FitArgs, execution: Execution) -> Result<ModelFile> {
    fit_config(&a.solver, 0.0, execution).validate()?;
    let data = load_dataset(&a.data)?;
    let warm = match &a.warm_start {
        Some(p) => Some(ModelFile::load(p)?.1),
        None => None,
    };
    let base = fit_config(&a.solver, 0.0, execution);
    let gamma = match a.gamma {
        GammaArg::Value(g) => g,
        GammaArg::Max => estimate_gamma_max(&data, &base)?,
    };
    let config = base.with_gamma(gamma);
    let (model, report) = Problem::new(&data).fit_from(&config, warm.as_ref())?;
    let file = ModelFile::new(&model, a.solver.seed, gamma, report.final_loss, report.converged);
    write_atomic(&a.out, &to_json(&file)?)?;
    let report_file = ReportFile {
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION,
        seed: a.solver.seed,
        gamma,
        report: &report,
    };
    write_atomic(&report_path(&a.out), &to_json(&report_file)?)?;
    println!(
        "gamma={gamma} loss={} converged={} active_components={}",
        report.final_loss, report.converged, report.active_components
    );
    Ok(file)
}

#[derive(Debug, Clone, Serialize)]
pub struct PathRow {
    pub gamma: f64,
    pub train_loss: f64,
    pub test_mse: f64,
    pub active_components: usize,
    pub selected: bool,
}

fn split(data: &NetworkDataset, train_frac: f64, seed: u64) -> Result<(NetworkDataset, NetworkDataset, f64)> {
    let (train, test) = train_test_split(data, train_frac, mix_seed(seed, 1))?;
    let null_mse = mse(&vec![train.response_mean(); test.len()], test.responses())?;
    Ok((train, test, null_mse))
}

/// The split uses stream 1 and the fits stream 2 of `--seed`, as a study
/// replicate does with its own seed.
pub fn path(a: &PathArgs, execution: Execution) -> Result<Vec<PathRow>> {
    require_fraction(a.train_frac)?;
    require_path_length(a.gammas)?;
    let config = fit_config(&a.solver, 0.0, execution);
    let config = FitConfig {
        seed: mix_seed(a.solver.seed, 2),
        ..config
    };
    config.validate()?;
    let data = load_dataset(&a.data)?;
    let (train, test, null_mse) = split(&data, a.train_frac, a.solver.seed)?;
    let problem = Problem::new(&train);
    let gamma_max = estimate_gamma_max_on(&problem, &config)?;
    let gammas = geometric_path(gamma_max, a.gammas);
    let points = fit_path(&problem, &config, &gammas, Some(&test))?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.gamma, p.test_mse.expect("test set given"))).collect();
    let selection = select_gamma(&pairs, a.rule, null_mse)?;
    let rows: Vec<PathRow> = points
        .iter()
        .zip(&pairs)
        .enumerate()
        .map(|(k, (p, &(gamma, test_mse)))| PathRow {
            gamma,
            train_loss: p.report.final_loss,
            test_mse,
            active_components: p.report.active_components,
            selected: k == selection.index,
        })
        .collect();
    let comments = provenance(
        Some(a.solver.seed),
        &[
            ("rule", rule_label(a.rule)),
            ("gamma_max", gamma_max.to_string()),
            ("null_mse", null_mse.to_string()),
            ("selected_gamma", selection.gamma.to_string()),
            ("fell_back", selection.fell_back.to_string()),
        ],
    );
    write_atomic(&a.out, &commented_csv(comments, &rows)?)?;
    println!("selected gamma={} test_mse={}", selection.gamma, pairs[selection.index].1);
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreFile {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub gamma: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub mse: f64,
    pub selected_edges: usize,
    pub truth_edges: usize,
    pub components: usize,
}

#[derive(Serialize)]
struct WeightedEdgeRow {
    node_a: usize,
    node_b: usize,
    weight: f64,
}

#[derive(Serialize)]
struct EdgeRow {
    node_a: usize,
    node_b: usize,
}

fn one_based(e: &Edge) -> (usize, usize) {
    (e.row + 1, e.col + 1)
}

pub fn eval(a: &EvalArgs) -> Result<ScoreFile> {
    let (file, model) = ModelFile::load(&a.model)?;
    let data = load_dataset(&a.data)?;
    if model.node_count() != data.node_count() {
        return Err(CliError::Usage(format!(
            "model has {} nodes, dataset has {}",
            model.node_count(),
            data.node_count()
        )));
    }
    let truth = read_truth(&a.truth, data.node_count())?;
    let test_mse = mse(&model.predict_all(&data)?, data.responses())?;
    let subgraphs = extract_subgraphs(&model);
    let s = score(subgraphs.union_edges.iter(), &truth, data.node_count(), test_mse)?;

    let out = StagedDir::new(&a.out)?;
    for c in &subgraphs.components {
        let rows: Vec<WeightedEdgeRow> = c
            .edges
            .iter()
            .map(|w| {
                let (node_a, node_b) = one_based(&w.edge);
                WeightedEdgeRow {
                    node_a,
                    node_b,
                    weight: w.weight,
                }
            })
            .collect();
        let comments = provenance(Some(file.seed), &[("component", (c.component_index + 1).to_string())]);
        out.write(format!("component_{}.csv", c.component_index + 1), &commented_csv(comments, &rows)?)?;
    }
    let union: Vec<EdgeRow> = subgraphs
        .union_edges
        .iter()
        .map(|e| {
            let (node_a, node_b) = one_based(e);
            EdgeRow { node_a, node_b }
        })
        .collect();
    out.write("union.csv", &commented_csv(provenance(Some(file.seed), &[]), &union)?)?;
    let score_file = ScoreFile {
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION.into(),
        seed: file.seed,
        gamma: file.gamma,
        tpr: s.tpr,
        fpr: s.fpr,
        mse: s.mse,
        selected_edges: subgraphs.union_edges.len(),
        truth_edges: truth.len(),
        components: subgraphs.components.len(),
    };
    out.write("score.json", &to_json(&score_file)?)?;
    out.commit()?;
    println!("tpr={} fpr={} mse={}", s.tpr, s.fpr, s.mse);
    Ok(score_file)
}

pub fn study_config(a: &StudyArgs, execution: Execution) -> StudyConfig {
    StudyConfig {
        simulation: simulation_config(a.nodes, a.samples, a.snr, None, a.seed),
        methods: a.methods.0.clone(),
        replications: a.reps,
        rank: a.rank,
        restarts: a.restarts,
        gamma_count: a.gammas,
        rule: a.rule.unwrap_or(a.snr.default_rule()),
        execution,
        ..StudyConfig::high_snr(a.seed)
    }
}

#[derive(Serialize)]
struct SummaryRow {
    method: Method,
    replications: usize,
    mse_mean: f64,
    mse_sd: f64,
    tpr_mean: f64,
    tpr_sd: f64,
    fpr_mean: f64,
    fpr_sd: f64,
    recovered: usize,
}

#[derive(Serialize)]
struct ReplicateRow {
    replicate: usize,
    seed: u64,
    method: Method,
    gamma: f64,
    mse: f64,
    tpr: f64,
    fpr: f64,
    selected_edges: usize,
    recovered: bool,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    format_version: u32,
    tool_version: &'a str,
    seed: u64,
    snr: &'a str,
    rule: String,
    config: serde_json::Value,
    rows: &'a [SummaryRow],
}

/// The study configuration minus the execution mode, which does not affect
/// results.
fn config_record(config: &StudyConfig) -> Result<serde_json::Value> {
    let mut value = serde_json::to_value(config).map_err(|e| CliError::Usage(format!("json encoding: {e}")))?;
    if let Some(map) = value.as_object_mut() {
        map.remove("execution");
    }
    Ok(value)
}

/// Writes summary.csv, replicates.csv and summary.json.
pub fn study(a: &StudyArgs, execution: Execution) -> Result<sbl_core::eval::StudySummary> {
    let config = study_config(a, execution);
    config.validate()?;
    let out = StagedDir::new(&a.out)?;
    let summary = replicate_study(&config)?;
    let rows: Vec<SummaryRow> = summary
        .rows
        .iter()
        .map(|r| SummaryRow {
            method: r.method,
            replications: r.replications,
            mse_mean: r.mse_mean,
            mse_sd: r.mse_sd,
            tpr_mean: r.tpr_mean,
            tpr_sd: r.tpr_sd,
            fpr_mean: r.fpr_mean,
            fpr_sd: r.fpr_sd,
            recovered: summary
                .records_for(r.method)
                .filter(|rec| recovers_signal(rec, RECOVERY_FRACTION))
                .count(),
        })
        .collect();
    let replicates: Vec<ReplicateRow> = summary
        .records
        .iter()
        .map(|r| ReplicateRow {
            replicate: r.replicate,
            seed: r.seed,
            method: r.method,
            gamma: r.gamma,
            mse: r.score.mse,
            tpr: r.score.tpr,
            fpr: r.score.fpr,
            selected_edges: r.selected_edges.len(),
            recovered: recovers_signal(r, RECOVERY_FRACTION),
        })
        .collect();
    let snr = match a.snr {
        Snr::High => "high",
        Snr::Low => "low",
    };
    let extra = [("snr", snr.to_string()), ("rule", rule_label(config.rule))];
    out.write("summary.csv", &commented_csv(provenance(Some(a.seed), &extra), &rows)?)?;
    out.write("replicates.csv", &commented_csv(provenance(Some(a.seed), &extra), &replicates)?)?;
    let json = SummaryFile {
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION,
        seed: a.seed,
        snr,
        rule: rule_label(config.rule),
        config: config_record(&config)?,
        rows: &rows,
    };
    out.write("summary.json", &to_json(&json)?)?;
    out.commit()?;
    for r in &rows {
        println!(
            "{}: mse={} ({}) tpr={} ({}) fpr={} ({}) recovered={}/{}",
            r.method, r.mse_mean, r.mse_sd, r.tpr_mean, r.tpr_sd, r.fpr_mean, r.fpr_sd, r.recovered, r.replications
        );
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub node_a: usize,
    pub node_b: usize,
    pub coefficient: f64,
}

/// One row per node pair; the intercept and convergence details go in the
/// header comments.
pub fn lasso_fit_cmd(a: &LassoFitArgs) -> Result<Vec<CoefficientRow>> {
    if !(a.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let data = load_dataset(&a.data)?;
    let design = vectorize(&data);
    let gamma = match a.gamma {
        GammaArg::Value(g) => g,
        GammaArg::Max => lasso_gamma_max(&design, data.responses()),
    };
    let fit = lasso_fit(&design, data.responses(), gamma, a.tol)?;
    let rows: Vec<CoefficientRow> = (0..edge_count(data.node_count()))
        .map(|k| {
            let (node_a, node_b) = one_based(&Edge::from_index(k));
            CoefficientRow {
                node_a,
                node_b,
                coefficient: fit.coefficients[k],
            }
        })
        .collect();
    let comments = provenance(
        None,
        &[
            ("gamma", gamma.to_string()),
            ("intercept", fit.intercept.to_string()),
            ("sweeps", fit.sweeps.to_string()),
            ("converged", fit.converged.to_string()),
        ],
    );
    write_atomic(&a.out, &commented_csv(comments, &rows)?)?;
    println!(
        "gamma={gamma} nonzero_edges={} converged={}",
        fit.selected_edges().len(),
        fit.converged
    );
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoPathRow {
    pub gamma: f64,
    pub train_loss: f64,
    pub test_mse: f64,
    pub nonzero_edges: usize,
    pub selected: bool,
}

/// Fitted from the largest penalty down with warm starts; rows are written
/// in increasing penalty order.
pub fn lasso_path_cmd(a: &LassoPathArgs) -> Result<Vec<LassoPathRow>> {
    require_fraction(a.train_frac)?;
    require_path_length(a.gammas)?;
    if !(a.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let data = load_dataset(&a.data)?;
    let (train, test, null_mse) = split(&data, a.train_frac, a.seed)?;
    let x_train = vectorize(&train);
    let x_test = vectorize(&test);
    let gamma_max = lasso_gamma_max(&x_train, train.responses()).max(1e-12);
    let mut gammas = geometric_path(gamma_max, a.gammas);
    gammas.reverse();
    let mut points = lasso_path(&x_train, train.responses(), &gammas, a.tol)?;
    points.reverse();
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| mse(&p.fit.predict(&x_test), test.responses()).map(|m| (p.gamma, m)))
        .collect::<sbl_core::Result<_>>()?;
    let selection = select_gamma(&pairs, a.rule, null_mse)?;
    let rows: Vec<LassoPathRow> = points
        .iter()
        .zip(&pairs)
        .enumerate()
        .map(|(k, (p, &(gamma, test_mse)))| LassoPathRow {
            gamma,
            train_loss: p.train_objective,
            test_mse,
            nonzero_edges: p.fit.selected_edges().len(),
            selected: k == selection.index,
        })
        .collect();
    let comments = provenance(
        Some(a.seed),
        &[
            ("rule", rule_label(a.rule)),
            ("gamma_max", gamma_max.to_string()),
            ("null_mse", null_mse.to_string()),
            ("selected_gamma", selection.gamma.to_string()),
            ("fell_back", selection.fell_back.to_string()),
        ],
    );
    write_atomic(&a.out, &commented_csv(comments, &rows)?)?;
    println!("selected gamma={} test_mse={}", selection.gamma, pairs[selection.index].1);
    Ok(rows)
}
