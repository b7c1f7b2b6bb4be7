//! Replicated comparison of the tree-penalized estimator against the
//! full-graph penalty: configuration, tuning-parameter selection, per-arm
//! runs and the CSV/JSON reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admm::{run_solver, AdmmConfig, PenaltySupport, Problem, SolverResult};
use crate::error::{Error, Result};
use crate::evaluation::{coefficient_mse, extract_clusters, selection_accuracy, ClusterPartition};
use crate::graph::{build_mst, parse_edge_list, similarity_weights, EdgeSupport, NetworkGraph};
use crate::local::{fit_local_ols, AdaptiveWeights, NodeDataset, OlsEstimate, DEFAULT_WEIGHT_CAP};
use crate::network::{Bucket, CommLedger, RoundTransport};
use crate::rng::replication_seed;
use crate::synthetic::{generate_cluster_model, generate_datasets, generate_geometric_graph, CoefficientScheme};

pub const CSV_COLUMNS: [&str; 14] = [
    "replication",
    "arm",
    "seed",
    "lambda",
    "mse",
    "s_hat",
    "exact_recovery",
    "rand_index",
    "iterations",
    "converged",
    "wall_time_ms",
    "scalars_setup",
    "scalars_iterate",
    "messages_total",
];

pub const MSE_DEFINITION: &str = "(1/(K*d)) * sum_i ||beta_hat_i - beta_true_i||^2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    MstL1,
    GraphL1,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::MstL1 => "mst_l1",
            Arm::GraphL1 => "graph_l1",
        }
    }

    pub fn penalty_support(self) -> PenaltySupport {
        match self {
            Arm::MstL1 => PenaltySupport::Mst,
            Arm::GraphL1 => PenaltySupport::FullGraph,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mst_l1" => Ok(Arm::MstL1),
            "graph_l1" => Ok(Arm::GraphL1),
            other => Err(Error::Config(format!("unknown arm `{other}` (expected mst_l1 or graph_l1)"))),
        }
    }
}

/// Parses a comma-separated arm list, dropping duplicates but keeping order.
pub fn parse_arms(s: &str) -> Result<Vec<Arm>> {
    let mut arms = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let arm: Arm = part.parse()?;
        if !arms.contains(&arm) {
            arms.push(arm);
        }
    }
    if arms.is_empty() {
        return Err(Error::Config("at least one arm is required".into()));
    }
    Ok(arms)
}

/// `τ` of the augmented Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// Mean diagonal entry of the local Gram matrices, `Σ_i tr(X_iᵀX_i) / (K·d)`.
    Auto,
    Fixed(f64),
}

impl TauRule {
    pub fn resolve(self, datasets: &[NodeDataset]) -> f64 {
        match self {
            TauRule::Fixed(t) => t,
            TauRule::Auto => {
                let d = datasets[0].dim();
                let total: f64 = datasets.iter().map(|ds| ds.gram().trace()).sum();
                total / (datasets.len() * d) as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    /// BIC over the given grid.
    Grid(Vec<f64>),
    /// BIC over `points` log-spaced values in `[lo, hi]·√N`.
    ScaledGrid { lo: f64, hi: f64, points: usize },
}

impl LambdaRule {
    pub fn grid(&self, total_samples: usize) -> Vec<f64> {
        match self {
            LambdaRule::Fixed(l) => vec![*l],
            LambdaRule::Grid(g) => g.clone(),
            LambdaRule::ScaledGrid { lo, hi, points } => {
                let root = (total_samples as f64).sqrt();
                log_space(lo * root, hi * root, *points)
            }
        }
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub samples: usize,
    pub dim: usize,
    pub clusters: usize,
    pub radius: f64,
    pub noise_sd: f64,
    pub gamma: f64,
    pub weight_cap: f64,
    /// Ridge added to each local Gram matrix for the initial fits.
    pub ridge: f64,
    pub tau: TauRule,
    pub lambda: LambdaRule,
    pub replications: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
    pub baseline: Arm,
    pub coefficients: Option<Vec<Vec<f64>>>,
    /// Fixed network read from an edge list instead of a geometric draw.
    pub graph_file: Option<PathBuf>,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub zero_tol: f64,
    /// Excluded from the config hash.
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nodes: 50,
            samples: 50,
            dim: 2,
            clusters: 3,
            radius: 0.5,
            noise_sd: 0.5,
            gamma: 1.0,
            weight_cap: DEFAULT_WEIGHT_CAP,
            ridge: 0.0,
            tau: TauRule::Auto,
            lambda: LambdaRule::ScaledGrid { lo: 1e-3, hi: 1e2, points: 20 },
            replications: 100,
            seed: 20_240_601,
            arms: vec![Arm::MstL1, Arm::GraphL1],
            baseline: Arm::MstL1,
            coefficients: None,
            graph_file: None,
            max_iters: 10_000,
            primal_tol: 1e-6,
            dual_tol: 1e-7,
            zero_tol: crate::evaluation::DEFAULT_ZERO_TOL,
            out: PathBuf::from("results"),
            workers: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Parse { line, reason: format!("`{key}`: {e}") })
}

fn parse_list(key: &str, value: &str, line: usize) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_value(key, v.trim(), line)).collect()
}

impl ExperimentConfig {
    /// Flat `key = value` text; `#` starts a comment. Keys not present keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, reason: format!("expected `key = value`, got `{content}`") })?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "nodes" => self.nodes = parse_value(key, value, line)?,
            "samples" => self.samples = parse_value(key, value, line)?,
            "dim" => self.dim = parse_value(key, value, line)?,
            "clusters" => self.clusters = parse_value(key, value, line)?,
            "radius" => self.radius = parse_value(key, value, line)?,
            "noise_sd" => self.noise_sd = parse_value(key, value, line)?,
            "gamma" => self.gamma = parse_value(key, value, line)?,
            "weight_cap" => self.weight_cap = parse_value(key, value, line)?,
            "ridge" => self.ridge = parse_value(key, value, line)?,
            "tau" => {
                self.tau = if value == "auto" { TauRule::Auto } else { TauRule::Fixed(parse_value(key, value, line)?) }
            }
            "lambda" => {
                self.lambda = match value {
                    "bic" => LambdaRule::ScaledGrid { lo: 1e-3, hi: 1e2, points: 20 },
                    v => LambdaRule::Fixed(parse_value(key, v, line)?),
                }
            }
            "lambda_grid" => self.lambda = LambdaRule::Grid(parse_list(key, value, line)?),
            "lambda_scaled_grid" => {
                let parts = parse_list(key, value, line)?;
                let [lo, hi, points] = parts[..] else {
                    return Err(Error::Parse { line, reason: "`lambda_scaled_grid` takes `lo, hi, points`".into() });
                };
                if points < 1.0 || points.fract() != 0.0 {
                    return Err(Error::Parse { line, reason: "grid point count must be a positive integer".into() });
                }
                self.lambda = LambdaRule::ScaledGrid { lo, hi, points: points as usize };
            }
            "replications" => self.replications = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "arms" => self.arms = parse_arms(value)?,
            "baseline" => self.baseline = value.parse()?,
            "coefficients" => {
                let rows = value
                    .split(';')
                    .map(|row| parse_list(key, row, line))
                    .collect::<Result<Vec<_>>>()?;
                self.coefficients = Some(rows);
            }
            "graph_file" => self.graph_file = Some(PathBuf::from(value)),
            "max_iters" => self.max_iters = parse_value(key, value, line)?,
            "primal_tol" => self.primal_tol = parse_value(key, value, line)?,
            "dual_tol" => self.dual_tol = parse_value(key, value, line)?,
            "zero_tol" => self.zero_tol = parse_value(key, value, line)?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse_value(key, value, line)?,
            other => return Err(Error::Parse { line, reason: format!("unknown key `{other}`") }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.nodes < 2 {
            return bad(format!("nodes must be >= 2, got {}", self.nodes));
        }
        if self.samples == 0 || self.dim == 0 {
            return bad("samples and dim must be positive".into());
        }
        if self.clusters == 0 || self.clusters > self.nodes {
            return bad(format!("clusters must be in 1..={}, got {}", self.nodes, self.clusters));
        }
        if self.graph_file.is_none() && !(self.radius > 0.0 && self.radius <= std::f64::consts::SQRT_2) {
            return bad(format!("radius must lie in (0, sqrt 2], got {}", self.radius));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and >= 0".into());
        }
        if !(self.gamma > 0.0 && self.weight_cap > 0.0) {
            return bad("gamma and weight_cap must be positive".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be finite and >= 0, got {}", self.ridge));
        }
        if let TauRule::Fixed(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("tau must be positive, got {t}"));
            }
        }
        match &self.lambda {
            LambdaRule::Fixed(l) if !(*l >= 0.0 && l.is_finite()) => return bad(format!("lambda must be >= 0, got {l}")),
            LambdaRule::Grid(g) => {
                if g.is_empty() {
                    return bad("lambda grid is empty".into());
                }
                if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) || g.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("lambda grid values must be positive and strictly increasing".into());
                }
            }
            LambdaRule::ScaledGrid { lo, hi, points } => {
                if !(*lo > 0.0 && hi >= lo && hi.is_finite()) || *points == 0 {
                    return bad("scaled lambda grid needs 0 < lo <= hi and points >= 1".into());
                }
            }
            LambdaRule::Fixed(_) => {}
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.max_iters == 0 || !(self.primal_tol > 0.0 && self.dual_tol > 0.0 && self.zero_tol >= 0.0) {
            return bad("max_iters and tolerances must be positive".into());
        }
        if let Some(rows) = &self.coefficients {
            CoefficientScheme::Table(rows.clone()).coefficients(self.clusters, self.dim)?;
        }
        Ok(())
    }

    pub fn scheme(&self) -> CoefficientScheme {
        match &self.coefficients {
            Some(rows) => CoefficientScheme::Table(rows.clone()),
            None => CoefficientScheme::Default,
        }
    }

    /// Hex SHA-256 of the canonical JSON form; output path and worker count
    /// are not part of it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn solver_config(&self, tau: f64, lambda: f64, arm: Arm) -> AdmmConfig {
        let mut cfg = AdmmConfig::with_tau(tau).lambda(lambda).tolerances(self.primal_tol, self.dual_tol).max_iters(self.max_iters);
        cfg.penalty_support = arm.penalty_support();
        cfg
    }
}

/// `N log(RSS/N) + log(N)·d·Ŝ`, with RSS floored at the smallest positive
/// normal double.
pub fn bic(rss: f64, total_samples: usize, dim: usize, s_hat: usize) -> f64 {
    let n = total_samples as f64;
    n * (rss.max(f64::MIN_POSITIVE) / n).ln() + n.ln() * (dim * s_hat) as f64
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub lambda: f64,
    pub converged: bool,
    pub bic: f64,
    pub s_hat: usize,
}

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub result: SolverResult,
    pub partition: ClusterPartition,
    pub wall_time_ms: f64,
    pub grid: Vec<GridPoint>,
}

/// Solves at every grid value and keeps the converged fit of smallest BIC;
/// ties go to the smaller `λ`. The grid is sorted first, so its order does not
/// matter.
pub fn select_lambda(problem: &Problem<'_>, base: &AdmmConfig, grid: &[f64], zero_tol: f64) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::Selection("empty lambda grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let d = problem.dim();
    let n_total = problem.total_samples();
    let mut best: Option<(f64, LambdaSelection)> = None;
    let mut points = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let cfg = AdmmConfig { lambda, ..base.clone() };
        let mut transport = RoundTransport::new(problem.support, Bucket::Iterate);
        let start = Instant::now();
        let result = run_solver(problem, &cfg, &mut transport, None)?;
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let partition = extract_clusters(&result.solution.delta, d, problem.support, zero_tol);
        let rss: f64 = problem
            .datasets
            .iter()
            .enumerate()
            .map(|(i, ds)| ds.residual_sum_of_squares(result.solution.beta_of(i)))
            .sum();
        let score = bic(rss, n_total, d, partition.cluster_count);
        points.push(GridPoint { lambda, converged: result.converged, bic: score, s_hat: partition.cluster_count });
        if !result.converged {
            log::debug!("lambda {lambda}: not converged after {} iterations", result.iterations);
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, LambdaSelection { lambda, result, partition, wall_time_ms, grid: Vec::new() }));
        }
    }
    let (_, mut sel) = best.ok_or_else(|| Error::Selection(format!("none of {} grid points converged", sorted.len())))?;
    sel.grid = points;
    Ok(sel)
}

/// One arm's outcome in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub lambda: f64,
    pub tau: f64,
    pub mse: f64,
    pub s_hat: usize,
    pub exact_recovery: bool,
    pub rand_index: f64,
    pub intransitive: bool,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
    pub scalars_setup: u64,
    pub scalars_iterate: u64,
    pub messages_total: u64,
    /// Rounds charged to the iterate bucket.
    pub rounds: usize,
    pub penalty_edges: usize,
}

impl ArmReport {
    pub fn scalars_total(&self) -> u64 {
        self.scalars_setup + self.scalars_iterate
    }

    /// Iterate-bucket scalars per round.
    pub fn scalars_per_round(&self) -> f64 {
        self.scalars_iterate as f64 / self.rounds as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub replication: usize,
    pub seed: u64,
    pub graph_edges: usize,
    pub arms: Vec<ArmReport>,
}

impl ReplicationReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// Sends every node's local fit to all of its network neighbours once; both
/// arms need these to form weights.
fn setup_exchange(graph: &NetworkGraph, ols: &[OlsEstimate]) -> Result<CommLedger> {
    let mut transport = RoundTransport::new(&graph.support(), Bucket::Setup);
    for (i, fit) in ols.iter().enumerate() {
        transport.broadcast_to_neighbors(i, &fit.coefficients)?;
    }
    transport.close_round()?;
    Ok(transport.into_ledger())
}

/// Runs every configured arm on one replication's data.
pub fn run_replication(config: &ExperimentConfig, replication: usize, fixed_graph: Option<&NetworkGraph>) -> Result<ReplicationReport> {
    let seed = replication_seed(config.seed, replication as u64);
    let graph = match fixed_graph {
        Some(g) => g.clone(),
        None => generate_geometric_graph(config.nodes, config.radius, seed)?,
    };
    let truth = generate_cluster_model(&graph, config.clusters, config.dim, &config.scheme(), config.noise_sd, seed)?;
    let datasets = generate_datasets(&truth, config.samples, seed)?;
    let ols = datasets.iter().map(|ds| fit_local_ols(ds, config.ridge)).collect::<Result<Vec<_>>>()?;
    let setup = setup_exchange(&graph, &ols)?;
    let tau = config.tau.resolve(&datasets);
    let n_total: usize = datasets.iter().map(NodeDataset::sample_count).sum();
    let grid = config.lambda.grid(n_total);

    let mut arms = Vec::with_capacity(config.arms.len());
    for &arm in &config.arms {
        let support: EdgeSupport = match arm {
            Arm::MstL1 => build_mst(&graph, &similarity_weights(&graph, &ols)?)?.into_support(),
            Arm::GraphL1 => graph.support(),
        };
        let weights = AdaptiveWeights::for_support(&support, &ols, config.gamma, config.weight_cap)?;
        let problem = Problem::new(&datasets, &ols, &support, &weights)?;
        let sel = select_lambda(&problem, &config.solver_config(tau, 0.0, arm), &grid, config.zero_tol)?;
        let acc = selection_accuracy(&sel.partition.cluster_of, &truth.assignment);
        let comm = &sel.result.comm;
        arms.push(ArmReport {
            arm,
            lambda: sel.lambda,
            tau,
            mse: coefficient_mse(&sel.result.solution.beta, &truth),
            s_hat: acc.s_hat,
            exact_recovery: acc.exact_recovery,
            rand_index: acc.rand_index,
            intransitive: sel.partition.intransitive,
            iterations: sel.result.iterations,
            converged: sel.result.converged,
            wall_time_ms: sel.wall_time_ms,
            scalars_setup: setup.setup_scalars,
            scalars_iterate: comm.iterate_scalars,
            messages_total: setup.messages_sent + comm.messages_sent,
            rounds: comm.per_round.len(),
            penalty_edges: support.edge_count(),
        });
    }
    Ok(ReplicationReport { replication, seed, graph_edges: graph.edge_count(), arms })
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub replication: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<ReplicationReport>,
    pub failures: Vec<Failure>,
    pub summary: Summary,
}

/// Runs all replications on a pool of `config.workers` threads. A failing
/// replication is logged and counted; the rest still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let fixed_graph = match &config.graph_file {
        Some(path) => {
            let (g, _) = parse_edge_list(&fs::read_to_string(path)?, None)?;
            if g.node_count() != config.nodes {
                return Err(Error::Config(format!(
                    "graph file has {} nodes but nodes = {}",
                    g.node_count(),
                    config.nodes
                )));
            }
            Some(g)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(usize, Result<ReplicationReport>)> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| (r, run_replication(config, r, fixed_graph.as_ref())))
            .collect()
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (replication, res) in results {
        match res {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                log::warn!("replication {replication} failed: {e}");
                failures.push(Failure { replication, reason: e.to_string() });
            }
        }
    }
    let summary = summarize(config, &reports, &failures);
    Ok(ExperimentOutcome { reports, failures, summary })
}

pub fn write_csv<W: std::io::Write>(reports: &[ReplicationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for rep in reports {
        for a in &rep.arms {
            w.write_record([
                rep.replication.to_string(),
                a.arm.to_string(),
                rep.seed.to_string(),
                a.lambda.to_string(),
                a.mse.to_string(),
                a.s_hat.to_string(),
                a.exact_recovery.to_string(),
                a.rand_index.to_string(),
                a.iterations.to_string(),
                a.converged.to_string(),
                format!("{:.3}", a.wall_time_ms),
                a.scalars_setup.to_string(),
                a.scalars_iterate.to_string(),
                a.messages_total.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `replications.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&outcome.reports, fs::File::create(dir.join("replications.csv"))?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&outcome.summary)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            p10: quantile(&v, 0.1),
            p25: quantile(&v, 0.25),
            p50: quantile(&v, 0.5),
            p75: quantile(&v, 0.75),
            p90: quantile(&v, 0.9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub replications: usize,
    pub mse: Quantiles,
    pub s_hat: Quantiles,
    pub wall_time_ms: Quantiles,
    pub scalars_total: Quantiles,
    pub iterations: Quantiles,
    pub exact_recovery_rate: f64,
    pub converged_rate: f64,
}

/// Arm versus the baseline arm. Ratios are `arm / baseline`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioBlock {
    pub median_mse_ratio: f64,
    pub median_wall_time_ratio: f64,
    pub median_scalars_total_ratio: f64,
    /// Median over replications of the per-replication total-scalar ratio.
    pub paired_scalars_total_ratio_median: f64,
    pub paired_wall_time_ratio_median: f64,
    /// Median of the per-round iterate-scalar ratio.
    pub per_round_scalars_ratio_median: f64,
    /// Replications in which the baseline has strictly lower MSE.
    pub baseline_lower_mse: usize,
    pub paired_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub version: &'static str,
    pub config_hash: String,
    pub mse_definition: &'static str,
    pub covariates: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub environment: Environment,
    pub config: ExperimentConfig,
    pub replications_requested: usize,
    pub replications_completed: usize,
    pub attrition: Vec<Failure>,
    pub arms: BTreeMap<String, ArmSummary>,
    pub baseline: String,
    pub ratios: BTreeMap<String, RatioBlock>,
}

pub fn summarize(config: &ExperimentConfig, reports: &[ReplicationReport], failures: &[Failure]) -> Summary {
    let collect = |arm: Arm, f: &dyn Fn(&ArmReport) -> f64| -> Vec<f64> {
        reports.iter().filter_map(|r| r.arm(arm)).map(f).collect()
    };
    let mut arms = BTreeMap::new();
    for &arm in &config.arms {
        let n = reports.iter().filter(|r| r.arm(arm).is_some()).count();
        if n == 0 {
            continue;
        }
        let rate = |f: &dyn Fn(&ArmReport) -> bool| {
            reports.iter().filter_map(|r| r.arm(arm)).filter(|a| f(a)).count() as f64 / n as f64
        };
        arms.insert(
            arm.name().to_string(),
            ArmSummary {
                replications: n,
                mse: Quantiles::of(&collect(arm, &|a| a.mse)),
                s_hat: Quantiles::of(&collect(arm, &|a| a.s_hat as f64)),
                wall_time_ms: Quantiles::of(&collect(arm, &|a| a.wall_time_ms)),
                scalars_total: Quantiles::of(&collect(arm, &|a| a.scalars_total() as f64)),
                iterations: Quantiles::of(&collect(arm, &|a| a.iterations as f64)),
                exact_recovery_rate: rate(&|a| a.exact_recovery),
                converged_rate: rate(&|a| a.converged),
            },
        );
    }
    let base = config.baseline;
    let mut ratios = BTreeMap::new();
    if arms.contains_key(base.name()) {
        for &arm in config.arms.iter().filter(|&&a| a != base) {
            let pairs: Vec<(&ArmReport, &ArmReport)> =
                reports.iter().filter_map(|r| Some((r.arm(arm)?, r.arm(base)?))).collect();
            if pairs.is_empty() {
                continue;
            }
            let paired = |f: &dyn Fn(&ArmReport) -> f64| median(&pairs.iter().map(|(a, b)| f(a) / f(b)).collect::<Vec<_>>());
            let med = |a: Arm, f: &dyn Fn(&ArmReport) -> f64| median(&collect(a, f));
            ratios.insert(
                arm.name().to_string(),
                RatioBlock {
                    median_mse_ratio: med(arm, &|a| a.mse) / med(base, &|a| a.mse),
                    median_wall_time_ratio: med(arm, &|a| a.wall_time_ms) / med(base, &|a| a.wall_time_ms),
                    median_scalars_total_ratio: med(arm, &|a| a.scalars_total() as f64)
                        / med(base, &|a| a.scalars_total() as f64),
                    paired_scalars_total_ratio_median: paired(&|a| a.scalars_total() as f64),
                    paired_wall_time_ratio_median: paired(&|a| a.wall_time_ms),
                    per_round_scalars_ratio_median: paired(&ArmReport::scalars_per_round),
                    baseline_lower_mse: pairs.iter().filter(|(a, b)| b.mse < a.mse).count(),
                    paired_replications: pairs.len(),
                },
            );
        }
    }
    Summary {
        environment: Environment {
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config.hash(),
            mse_definition: MSE_DEFINITION,
            covariates: "iid standard normal",
        },
        config: config.clone(),
        replications_requested: config.replications,
        replications_completed: reports.len(),
        attrition: failures.to_vec(),
        arms,
        baseline: base.name().to_string(),
        ratios,
    }
}
