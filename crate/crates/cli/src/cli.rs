use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbl_core::eval::Method;
use sbl_core::solver::SelectionRule;

#[derive(Debug, Parser)]
#[command(name = "sbl", version, about = "Sparse symmetric bilinear regression on network predictors")]
pub struct Cli {
    /// Worker threads for restarts, path points and replicates (1 = sequential).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clique-signal dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the bilinear model at one penalty.
    Fit(FitArgs),
    /// Fit a penalty path on a train/test split and select a penalty.
    Path(PathArgs),
    /// Score a fitted model and export its component subgraphs.
    Eval(EvalArgs),
    /// Replicated simulation study comparing methods.
    Study(StudyArgs),
    /// Lasso baseline over vectorized edges.
    #[command(subcommand)]
    Lasso(LassoCommand),
}

#[derive(Debug, Subcommand)]
pub enum LassoCommand {
    Fit(LassoFitArgs),
    Path(LassoPathArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Snr {
    High,
    Low,
}

impl Snr {
    pub fn noise_fraction(self) -> f64 {
        match self {
            Snr::High => 0.10,
            Snr::Low => 1.0,
        }
    }

    pub fn default_rule(self) -> SelectionRule {
        match self {
            Snr::High => SelectionRule::Threshold(0.03),
            Snr::Low => SelectionRule::MinMse,
        }
    }
}

/// Parses `threshold`, `threshold:TAU` or `min`.
pub fn parse_rule(s: &str) -> Result<SelectionRule, String> {
    let s = s.trim().to_ascii_lowercase();
    match s.split_once(':') {
        None if s == "min" => Ok(SelectionRule::MinMse),
        None if s == "threshold" => Ok(SelectionRule::Threshold(0.03)),
        Some(("threshold", tau)) => match f64::from_str(tau) {
            Ok(t) if t > 0.0 && t.is_finite() => Ok(SelectionRule::Threshold(t)),
            _ => Err(format!("threshold must be a positive number, got {tau:?}")),
        },
        _ => Err(format!("unknown rule {s:?} (expected min, threshold or threshold:TAU)")),
    }
}

pub fn rule_label(rule: SelectionRule) -> String {
    match rule {
        SelectionRule::MinMse => "min".into(),
        SelectionRule::Threshold(t) => format!("threshold:{t}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaArg {
    Value(f64),
    Max,
}

fn parse_gamma(s: &str) -> Result<GammaArg, String> {
    if s.eq_ignore_ascii_case("max") {
        return Ok(GammaArg::Max);
    }
    match f64::from_str(s) {
        Ok(g) if g >= 0.0 && g.is_finite() => Ok(GammaArg::Value(g)),
        _ => Err(format!("gamma must be a non-negative number or \"max\", got {s:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodList(pub Vec<Method>);

fn parse_methods(s: &str) -> Result<MethodList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let m = Method::from_str(part).map_err(|e| e.to_string())?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(MethodList(out))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Snr::High)]
    pub snr: Snr,
    /// Number of basis cliques mixed into the networks [default: min(10, nodes - 1)].
    #[arg(long)]
    pub bases: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Relative objective change that ends descent.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    /// Penalty, or "max" for the estimated smallest all-zero penalty.
    #[arg(long, value_parser = parse_gamma)]
    pub gamma: GammaArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Model file whose parameters seed the first restart.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Model file; the fit report goes next to it as <stem>.report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Number of penalties, log-spaced from gamma_max / 100 to gamma_max.
    #[arg(long, default_value_t = 50)]
    pub gammas: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    /// min, threshold or threshold:TAU.
    #[arg(long, value_parser = parse_rule, default_value = "threshold:0.03")]
    pub rule: SelectionRule,
    /// Path CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset the test MSE is computed on.
    #[arg(long)]
    pub data: PathBuf,
    /// Truth edge CSV (node_a,node_b,basis; 1-based).
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, value_enum, default_value_t = Snr::High)]
    pub snr: Snr,
    /// Replications; the full-scale study uses 100.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, value_parser = parse_methods, default_value = "sbl,lasso")]
    pub methods: MethodList,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 50)]
    pub gammas: usize,
    /// Selection rule [default: threshold:0.03 for high SNR, min for low].
    #[arg(long, value_parser = parse_rule)]
    pub rule: Option<SelectionRule>,
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LassoFitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Penalty, or "max" for the smallest all-zero penalty.
    #[arg(long, value_parser = parse_gamma)]
    pub gamma: GammaArg,
    /// Largest curvature-weighted squared coordinate change that ends descent.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Coefficient CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LassoPathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub gammas: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    #[arg(long, value_parser = parse_rule, default_value = "threshold:0.03")]
    pub rule: SelectionRule,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Seeds the train/test split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
