//! Synthetic networks, clustered ground truth and per-node regression data.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::local::NodeDataset;
use crate::rng::{stream, Purpose};

/// Regeneration attempts before a geometric graph is declared unattainable.
pub const MAX_GRAPH_ATTEMPTS: u64 = 1000;

/// Coefficients used when `S ≤ 3` and `d = 2`.
pub const DEFAULT_TABLE: [[f64; 2]; 3] = [[1.0, 1.0], [-1.0, 2.0], [3.0, -1.0]];

/// `K` uniform points in the unit square joined when within `radius`.
/// Redraws (from the next attempt's stream) until the graph is connected.
pub fn generate_geometric_graph(k: usize, radius: f64, seed: u64) -> Result<NetworkGraph> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 nodes, got {k}")));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(Error::Config(format!("radius must lie in (0, sqrt 2], got {radius}")));
    }
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut rng = stream(seed, Purpose::Graph, attempt);
        let points: Vec<[f64; 2]> = (0..k).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
                if (dx * dx + dy * dy).sqrt() <= radius {
                    edges.push((i, j));
                }
            }
        }
        if crate::graph::is_connected(k, &edges) {
            return NetworkGraph::new(k, edges)?.with_positions(points);
        }
    }
    Err(Error::Generation(format!(
        "no connected geometric graph with K = {k}, r = {radius} after {MAX_GRAPH_ATTEMPTS} attempts; try a larger radius"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScheme {
    /// [`DEFAULT_TABLE`] for `d = 2, S ≤ 3`; otherwise coordinate `p` of
    /// cluster `s` is `2·((s + p) mod S) − (S − 1)`, which keeps clusters at
    /// sup-distance at least 2.
    Default,
    /// One row per cluster.
    Table(Vec<Vec<f64>>),
}

impl CoefficientScheme {
    pub fn coefficients(&self, clusters: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Self::Default if dim == 2 && clusters <= DEFAULT_TABLE.len() => {
                Ok(DEFAULT_TABLE[..clusters].iter().map(|r| r.to_vec()).collect())
            }
            Self::Default => Ok((0..clusters)
                .map(|s| {
                    (0..dim)
                        .map(|p| 2.0 * ((s + p) % clusters) as f64 - (clusters as f64 - 1.0))
                        .collect()
                })
                .collect()),
            Self::Table(rows) => {
                if rows.len() < clusters || rows.iter().take(clusters).any(|r| r.len() != dim) {
                    return Err(Error::Config(format!(
                        "coefficient table needs {clusters} rows of length {dim}"
                    )));
                }
                Ok(rows[..clusters].to_vec())
            }
        }
    }
}

/// Ground truth: `S` coefficient vectors, a node→cluster map and the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub coefficients: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub noise_sd: f64,
}

impl ClusterModel {
    pub fn cluster_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn beta_of(&self, node: usize) -> &[f64] {
        &self.coefficients[self.assignment[node]]
    }

    /// True coefficients stacked node by node.
    pub fn stacked_beta(&self) -> Vec<f64> {
        (0..self.node_count()).flat_map(|i| self.beta_of(i).iter().copied()).collect()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.assignment[i] == cluster).collect()
    }

    /// Checks distinct coefficient vectors and that every multi-member
    /// cluster induces a connected subgraph of `graph`.
    pub fn audit(&self, graph: &NetworkGraph) -> Result<()> {
        if self.node_count() != graph.node_count() {
            return Err(Error::Generation("model and graph disagree on the node count".into()));
        }
        let s = self.cluster_count();
        for a in 0..s {
            for b in a + 1..s {
                let dist = self.coefficients[a]
                    .iter()
                    .zip(&self.coefficients[b])
                    .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
                if dist == 0.0 {
                    return Err(Error::Generation(format!("clusters {a} and {b} share coefficients")));
                }
            }
        }
        for c in 0..s {
            let members = self.members(c);
            if members.is_empty() {
                return Err(Error::Generation(format!("cluster {c} is empty")));
            }
            if !induces_connected(graph, &members) {
                return Err(Error::Generation(format!("cluster {c} does not induce a connected subgraph")));
            }
        }
        Ok(())
    }
}

fn induces_connected(graph: &NetworkGraph, members: &[usize]) -> bool {
    if members.len() <= 1 {
        return true;
    }
    let index = |v: usize| members.binary_search(&v).ok();
    let mut uf = crate::graph::UnionFind::new(members.len());
    let mut joins = 0;
    for &(i, j) in graph.edges() {
        if let (Some(a), Some(b)) = (index(i), index(j)) {
            if uf.union(a, b) {
                joins += 1;
            }
        }
    }
    joins + 1 == members.len()
}

/// Partitions the nodes into `clusters` connected groups by simultaneous
/// breadth-first growth from seeded sources. The first source is drawn at
/// random; each further source is the node farthest (in hops) from those
/// already chosen.
pub fn generate_cluster_model(
    graph: &NetworkGraph,
    clusters: usize,
    dim: usize,
    scheme: &CoefficientScheme,
    noise_sd: f64,
    seed: u64,
) -> Result<ClusterModel> {
    let k = graph.node_count();
    if clusters == 0 || clusters > k {
        return Err(Error::Config(format!("cluster count must be in 1..={k}, got {clusters}")));
    }
    if dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Config(format!("noise sd must be finite and >= 0, got {noise_sd}")));
    }
    let adj = graph.adjacency();
    let mut rng = stream(seed, Purpose::Clusters, 0);
    let mut sources = vec![rng.random_range(0..k)];
    let mut hops = bfs_hops(&adj, sources[0]);
    while sources.len() < clusters {
        let next = (0..k)
            .filter(|v| !sources.contains(v))
            .max_by(|&a, &b| hops[a].cmp(&hops[b]).then(b.cmp(&a)))
            .expect("fewer sources than nodes");
        sources.push(next);
        for (h, nh) in hops.iter_mut().zip(bfs_hops(&adj, next)) {
            *h = (*h).min(nh);
        }
    }

    let mut assignment = vec![usize::MAX; k];
    let mut queue = VecDeque::new();
    for (c, &src) in sources.iter().enumerate() {
        assignment[src] = c;
        queue.push_back(src);
    }
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if assignment[u] == usize::MAX {
                assignment[u] = assignment[v];
                queue.push_back(u);
            }
        }
    }

    let model = ClusterModel { coefficients: scheme.coefficients(clusters, dim)?, assignment, noise_sd };
    model.audit(graph)?;
    Ok(model)
}

fn bfs_hops(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut hops = vec![usize::MAX; adj.len()];
    hops[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if hops[u] == usize::MAX {
                hops[u] = hops[v] + 1;
                queue.push_back(u);
            }
        }
    }
    hops
}

/// `n` samples per node: `x ~ N(0, I_d)`, `y = β_{c(i)}ᵀx + ε`, `ε ~ N(0, σ²)`.
/// Node `i` draws from its own stream, so datasets do not depend on each other.
pub fn generate_datasets(model: &ClusterModel, n: usize, seed: u64) -> Result<Vec<NodeDataset>> {
    let d = model.dim();
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    if n < d {
        log::warn!("n = {n} < d = {d}: local least squares will be rank deficient");
    }
    let noise = Normal::new(0.0, model.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    (0..model.node_count())
        .map(|i| {
            let mut rng = stream(seed, Purpose::Data, i as u64);
            let beta = model.beta_of(i);
            let mut x = DMatrix::zeros(n, d);
            let mut y = DVector::zeros(n);
            for r in 0..n {
                let mut mean = 0.0;
                for p in 0..d {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    x[(r, p)] = v;
                    mean += beta[p] * v;
                }
                y[r] = mean + noise.sample(&mut rng);
            }
            NodeDataset::new(i, x, y)
        })
        .collect()
}

/// `d n` header, then one `x_1 … x_d y` row per sample.
pub fn format_dataset(data: &NodeDataset) -> String {
    let (n, d) = (data.sample_count(), data.dim());
    let mut out = format!("{d} {n}\n");
    for r in 0..n {
        for p in 0..d {
            write!(out, "{} ", data.design()[(r, p)]).expect("write to String");
        }
        writeln!(out, "{}", data.responses()[r]).expect("write to String");
    }
    out
}

pub fn parse_dataset(node_id: usize, text: &str) -> Result<NodeDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "missing `d n` header".into() })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: hline + 1, reason: format!("bad header: {e}") })?;
    let [d, n] = dims[..] else {
        return Err(Error::Parse { line: hline + 1, reason: "header must be `d n`".into() });
    };
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    let mut rows = 0;
    for (lineno, line) in lines {
        let parse_err = |reason: String| Error::Parse { line: lineno + 1, reason };
        if rows == n {
            return Err(parse_err(format!("more than {n} rows")));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("bad number: {e}")))?;
        if vals.len() != d + 1 {
            return Err(parse_err(format!("expected {} values, got {}", d + 1, vals.len())));
        }
        for p in 0..d {
            x[(rows, p)] = vals[p];
        }
        y[rows] = vals[d];
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse { line: 0, reason: format!("header promises {n} rows, found {rows}") });
    }
    NodeDataset::new(node_id, x, y)
}

/// Writes `node_<i>.txt` per node into `dir`.
pub fn write_datasets(dir: &Path, datasets: &[NodeDataset]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for ds in datasets {
        fs::write(dir.join(format!("node_{}.txt", ds.node_id())), format_dataset(ds))?;
    }
    Ok(())
}

/// Reads `node_0.txt`, `node_1.txt`, … from `dir` until the first gap.
pub fn read_datasets(dir: &Path) -> Result<Vec<NodeDataset>> {
    let mut out = Vec::new();
    loop {
        let path = dir.join(format!("node_{}.txt", out.len()));
        if !path.exists() {
            break;
        }
        out.push(parse_dataset(out.len(), &fs::read_to_string(path)?)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no node_0.txt in {}", dir.display())));
    }
    Ok(out)
}
