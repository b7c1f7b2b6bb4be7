//! Network topology, model-similarity weights and spanning-tree algebra.
//!
//! Node ids are 0-based throughout. Every undirected edge is stored once as
//! an oriented pair `(s, e)` with `s < e`; that orientation fixes the signs of
//! the incidence matrix (`+1` at `s`, `-1` at `e`).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Undirected communication network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    positions: Option<Vec<[f64; 2]>>,
}

impl NetworkGraph {
    /// Builds a connected graph. Pairs may be given in either orientation;
    /// they are normalized to `(min, max)` and sorted.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges = normalize_edges(node_count, edges)?;
        if !is_connected(node_count, &edges) {
            return Err(Error::Topology(format!(
                "graph on {node_count} nodes with {} edges is not connected",
                edges.len()
            )));
        }
        Ok(Self { node_count, edges, positions: None })
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.len() != self.node_count {
            return Err(Error::Config(format!(
                "{} positions given for {} nodes",
                positions.len(),
                self.node_count
            )));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn contains_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).is_ok()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.node_count, &self.edges)
    }

    /// The whole edge set as a penalty support.
    pub fn support(&self) -> EdgeSupport {
        EdgeSupport::from_sorted(self.node_count, self.edges.clone())
    }
}

fn normalize_edges(
    node_count: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    if node_count == 0 {
        return Err(Error::Topology("graph must have at least one node".into()));
    }
    let mut set = BTreeSet::new();
    for (i, j) in edges {
        if i >= node_count || j >= node_count {
            return Err(Error::Topology(format!(
                "edge ({i}, {j}) references a node outside 0..{node_count}"
            )));
        }
        if i == j {
            return Err(Error::Topology(format!("self-loop at node {i}")));
        }
        if !set.insert((i.min(j), i.max(j))) {
            return Err(Error::Topology(format!("duplicate edge ({i}, {j})")));
        }
    }
    Ok(set.into_iter().collect())
}

fn adjacency(node_count: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); node_count];
    for &(s, e) in edges {
        adj[s].push(e);
        adj[e].push(s);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

/// True when the edge set connects all `node_count` nodes.
pub fn is_connected(node_count: usize, edges: &[(usize, usize)]) -> bool {
    if node_count == 0 {
        return false;
    }
    let mut uf = UnionFind::new(node_count);
    let mut components = node_count;
    for &(s, e) in edges {
        if uf.union(s, e) {
            components -= 1;
        }
    }
    components == 1
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Nonnegative weight per graph edge, aligned with [`NetworkGraph::edges`].
/// Non-edges have no entry (their weight is implicitly infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl EdgeWeights {
    pub fn new(graph: &NetworkGraph, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != graph.edge_count() {
            return Err(Error::Config(format!(
                "{} weights for {} edges",
                weights.len(),
                graph.edge_count()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Config(format!("edge weight {w} is not a finite nonnegative number")));
        }
        Ok(Self { edges: graph.edges().to_vec(), weights })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok().map(|k| self.weights[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weight of edge `(i, j)` is the Euclidean distance between the local
/// least-squares fits of its endpoints.
pub fn similarity_weights<V: AsRef<[f64]>>(graph: &NetworkGraph, ols: &[V]) -> Result<EdgeWeights> {
    if ols.len() != graph.node_count() {
        return Err(Error::Config(format!(
            "{} coefficient vectors for {} nodes",
            ols.len(),
            graph.node_count()
        )));
    }
    let dim = ols[0].as_ref().len();
    if let Some((node, v)) = ols.iter().enumerate().find(|(_, v)| v.as_ref().len() != dim) {
        return Err(Error::Config(format!(
            "node {node} has {} coefficients, expected {dim}",
            v.as_ref().len()
        )));
    }
    let weights = graph
        .edges()
        .iter()
        .map(|&(i, j)| euclidean_distance(ols[i].as_ref(), ols[j].as_ref()))
        .collect();
    EdgeWeights::new(graph, weights)
}

pub(crate) fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Set of oriented edges that carry a fusion penalty: either a spanning tree
/// or the full network.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSupport {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    incident: Vec<Vec<Incidence>>,
}

/// One endpoint's view of an incident edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incidence {
    pub edge: usize,
    pub neighbor: usize,
    /// `[H]_{edge, node}`: `+1.0` at the start node, `-1.0` at the end node.
    pub sign: f64,
}

impl EdgeSupport {
    fn from_sorted(node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let neighbors = adjacency(node_count, &edges);
        let mut incident = vec![Vec::new(); node_count];
        for (l, &(s, e)) in edges.iter().enumerate() {
            incident[s].push(Incidence { edge: l, neighbor: e, sign: 1.0 });
            incident[e].push(Incidence { edge: l, neighbor: s, sign: -1.0 });
        }
        for list in &mut incident {
            list.sort_by_key(|inc| inc.neighbor);
        }
        Self { node_count, edges, neighbors, incident }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Oriented edges `(s(l), e(l))`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Incident edges of `node`, ordered by neighbour id.
    pub fn incident(&self, node: usize) -> &[Incidence] {
        &self.incident[node]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.node_count && is_connected(self.node_count, &self.edges)
    }
}

/// A spanning tree of the network: `K - 1` oriented edges, acyclic, spanning.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree(EdgeSupport);

impl SpanningTree {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges = normalize_edges(node_count, edges)?;
        let support = EdgeSupport::from_sorted(node_count, edges);
        if !support.is_tree() {
            return Err(Error::Topology(format!(
                "{} edges do not form a spanning tree on {node_count} nodes",
                support.edge_count()
            )));
        }
        Ok(Self(support))
    }

    pub fn support(&self) -> &EdgeSupport {
        &self.0
    }

    pub fn into_support(self) -> EdgeSupport {
        self.0
    }
}

impl Deref for SpanningTree {
    type Target = EdgeSupport;

    fn deref(&self) -> &EdgeSupport {
        &self.0
    }
}

/// Kruskal's algorithm. Candidates are scanned in ascending `(weight, s, e)`
/// order, so equal weights resolve toward lexicographically smaller edges.
pub fn build_mst(graph: &NetworkGraph, weights: &EdgeWeights) -> Result<SpanningTree> {
    if weights.edges != graph.edges {
        return Err(Error::Config("edge weights do not belong to this graph".into()));
    }
    let k = graph.node_count();
    let mut order: Vec<usize> = (0..graph.edge_count()).collect();
    order.sort_by(|&a, &b| {
        weights.weights[a]
            .total_cmp(&weights.weights[b])
            .then_with(|| graph.edges[a].cmp(&graph.edges[b]))
    });

    let mut uf = UnionFind::new(k);
    let mut chosen = Vec::with_capacity(k.saturating_sub(1));
    for idx in order {
        let (s, e) = graph.edges[idx];
        if uf.union(s, e) {
            chosen.push((s, e));
            if chosen.len() + 1 == k {
                break;
            }
        }
    }
    if chosen.len() + 1 != k {
        return Err(Error::Topology("graph is disconnected; no spanning tree exists".into()));
    }
    chosen.sort_unstable();
    Ok(SpanningTree(EdgeSupport::from_sorted(k, chosen)))
}

/// Sparse oriented incidence matrix: one row per support edge.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    node_count: usize,
    rows: Vec<(usize, usize)>,
}

impl IncidenceMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.node_count
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(l, &(s, e))| [(l, s, 1.0), (l, e, -1.0)])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (s, e) = self.rows[row];
        match col {
            c if c == s => 1.0,
            c if c == e => -1.0,
            _ => 0.0,
        }
    }

    /// `H v` for a length-`K` vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&(s, e)| v[s] - v[e]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }
}

pub fn incidence_matrix(support: &EdgeSupport) -> IncidenceMatrix {
    IncidenceMatrix { node_count: support.node_count, rows: support.edges.clone() }
}

/// Appends the row `(1/sqrt(K)) 1ᵀ`. For a spanning tree the result is square
/// and invertible.
pub fn augment_incidence(h: &IncidenceMatrix) -> DMatrix<f64> {
    let k = h.ncols();
    let mut m = DMatrix::zeros(h.nrows() + 1, k);
    for (r, c, v) in h.entries() {
        m[(r, c)] = v;
    }
    let fill = 1.0 / (k as f64).sqrt();
    for c in 0..k {
        m[(h.nrows(), c)] = fill;
    }
    m
}

/// Sparse graph Laplacian `L = HᵀH`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    degrees: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    /// Nonzero entries as `(row, col, value)`, diagonal first.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let diag = self.degrees.iter().enumerate().map(|(i, &d)| (i, i, d as f64));
        let off = self.edges.iter().flat_map(|&(s, e)| [(s, e, -1.0), (e, s, -1.0)]);
        diag.chain(off)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.degrees.iter().zip(v).map(|(&d, x)| d as f64 * x).collect();
        for &(s, e) in &self.edges {
            out[s] -= v[e];
            out[e] -= v[s];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}

pub fn laplacian(support: &EdgeSupport) -> Laplacian {
    Laplacian { degrees: support.degrees(), edges: support.edges.clone() }
}

/// `M ⊗ I_d`.
pub fn kron_identity(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows() * d, m.ncols() * d);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            if v != 0.0 {
                for p in 0..d {
                    out[(r * d + p, c * d + p)] = v;
                }
            }
        }
    }
    out
}

/// Parses an edge list: one `i j [weight]` triple per line, 0-based ids,
/// blank lines and `#` comments ignored. The node count is one more than the
/// largest id unless `node_count` is given. Weights must be present on every
/// line or on none.
pub fn parse_edge_list(text: &str, node_count: Option<usize>) -> Result<(NetworkGraph, Option<EdgeWeights>)> {
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: lineno + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected `i j [weight]`, got {} fields", fields.len())));
        }
        let i: usize = fields[0].parse().map_err(|e| parse_err(format!("bad node id: {e}")))?;
        let j: usize = fields[1].parse().map_err(|e| parse_err(format!("bad node id: {e}")))?;
        if let Some(w) = fields.get(2) {
            let w: f64 = w.parse().map_err(|e| parse_err(format!("bad weight: {e}")))?;
            weights.push((i.min(j), i.max(j), w));
        }
        pairs.push((i, j));
    }
    if !weights.is_empty() && weights.len() != pairs.len() {
        return Err(Error::Parse { line: 0, reason: "weights must be given for all edges or none".into() });
    }
    let inferred = pairs.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(1);
    let k = match node_count {
        Some(k) if k < inferred => {
            return Err(Error::Topology(format!("edge list references node {} but K = {k}", inferred - 1)))
        }
        Some(k) => k,
        None => inferred,
    };
    let graph = NetworkGraph::new(k, pairs)?;
    if weights.is_empty() {
        return Ok((graph, None));
    }
    weights.sort_by_key(|&(i, j, _)| (i, j));
    let w = EdgeWeights::new(&graph, weights.into_iter().map(|(_, _, w)| w).collect())?;
    Ok((graph, Some(w)))
}

pub fn write_edge_list(graph: &NetworkGraph, weights: Option<&EdgeWeights>) -> String {
    let mut out = String::new();
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        match weights {
            Some(w) => writeln!(out, "{i} {j} {}", w.weights[k]),
            None => writeln!(out, "{i} {j}"),
        }
        .expect("writing to a String cannot fail");
    }
    out
}
