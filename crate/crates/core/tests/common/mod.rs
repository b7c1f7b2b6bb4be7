#![allow(dead_code)]

use treefuse::admm::{run_solver, AdmmConfig, Problem, SolverResult};
use treefuse::graph::{build_mst, similarity_weights, EdgeSupport, NetworkGraph};
use treefuse::local::{fit_local_ols, AdaptiveWeights, NodeDataset, OlsEstimate, DEFAULT_WEIGHT_CAP};
use treefuse::network::{Bucket, RoundTransport};
use treefuse::synthetic::{generate_cluster_model, generate_datasets, generate_geometric_graph, ClusterModel, CoefficientScheme};

pub struct Fixture {
    pub graph: NetworkGraph,
    pub truth: ClusterModel,
    pub datasets: Vec<NodeDataset>,
    pub ols: Vec<OlsEstimate>,
    pub support: EdgeSupport,
    pub weights: AdaptiveWeights,
}

impl Fixture {
    /// Random geometric network with an MST penalty support.
    pub fn random(k: usize, d: usize, clusters: usize, n: usize, seed: u64) -> Self {
        let graph = generate_geometric_graph(k, 0.8, seed).unwrap();
        let truth = generate_cluster_model(&graph, clusters, d, &CoefficientScheme::Default, 0.5, seed).unwrap();
        let datasets = generate_datasets(&truth, n, seed).unwrap();
        Self::from_parts(graph, truth, datasets, true)
    }

    pub fn from_parts(graph: NetworkGraph, truth: ClusterModel, datasets: Vec<NodeDataset>, mst: bool) -> Self {
        let ols: Vec<_> = datasets.iter().map(|d| fit_local_ols(d, 0.0).unwrap()).collect();
        let support = if mst {
            build_mst(&graph, &similarity_weights(&graph, &ols).unwrap()).unwrap().into_support()
        } else {
            graph.support()
        };
        let weights = AdaptiveWeights::for_support(&support, &ols, 1.0, DEFAULT_WEIGHT_CAP).unwrap();
        Self { graph, truth, datasets, ols, support, weights }
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem::new(&self.datasets, &self.ols, &self.support, &self.weights).unwrap()
    }
}

pub fn solve(problem: &Problem<'_>, cfg: &AdmmConfig) -> SolverResult {
    let mut transport = RoundTransport::new(problem.support, Bucket::Iterate);
    run_solver(problem, cfg, &mut transport, None).unwrap()
}

pub fn tight(lambda: f64) -> AdmmConfig {
    AdmmConfig::default().lambda(lambda).tolerances(1e-11, 1e-11).max_iters(200_000)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
