//! Decentralized generalized ADMM for the edge-penalized least-squares
//! problem
//!
//! ```text
//! minimize  ½ Σ_i ‖y_i − X_i β_i‖² + λ Σ_l Σ_p π_{l,p} |Δ_{l,p}|
//! subject to Δ_l = β_{s(l)} − β_{e(l)}   for every support edge l
//! ```
//!
//! The β-step carries the proximal term `½(β−βᵗ)ᵀP(β−βᵗ)` with
//! `P = D − τ L⊗I_d`, which cancels the coupling Laplacian and leaves one
//! `d × d` system per node. Each endpoint of an edge keeps its own copy of
//! `(Δ_l, z_l)`, with the end node holding the negated values, so the only
//! quantity that crosses the network is `β_iᵗ`.
//!
//! The multiplier convention is that of the augmented Lagrangian
//! `… − ⟨z, Hβ − Δ⟩ + (τ/2)‖Hβ − Δ‖²`; at a solution `XᵀXβ − Xᵀy = Hᵀz` and
//! `z_{l,p} = −λ π_{l,p} sign(Δ_{l,p})` wherever `Δ_{l,p} ≠ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, EdgeSupport, Incidence};
use crate::local::{factorize, AdaptiveWeights, NodeDataset, OlsEstimate};
use crate::network::{CommLedger, RoundTransport};

/// Which edges carry a fusion penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySupport {
    /// The model-similarity minimum spanning tree.
    Mst,
    /// Every edge of the communication network.
    FullGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub tau: f64,
    /// Margin `ε` in `D_i = 2τ·deg(i) + ε`.
    pub d_margin: f64,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub penalty_support: PenaltySupport,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tau: 1.0,
            d_margin: 1.0,
            max_iters: 10_000,
            primal_tol: 1e-6,
            dual_tol: 1e-7,
            penalty_support: PenaltySupport::Mst,
        }
    }
}

impl AdmmConfig {
    /// Defaults with the given `τ` and the matching margin `ε = τ`.
    pub fn with_tau(tau: f64) -> Self {
        Self { tau, d_margin: tau, ..Self::default() }
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn tolerances(mut self, primal: f64, dual: f64) -> Self {
        self.primal_tol = primal;
        self.dual_tol = dual;
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !positive(self.tau) || !positive(self.d_margin) {
            return Err(Error::Config("tau and d_margin must be positive".into()));
        }
        if !positive(self.primal_tol) || !positive(self.dual_tol) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the solvers need about one instance.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub datasets: &'a [NodeDataset],
    /// Local fits; `β⁰` of the decentralized solver.
    pub init: &'a [OlsEstimate],
    pub support: &'a EdgeSupport,
    pub weights: &'a AdaptiveWeights,
}

impl<'a> Problem<'a> {
    pub fn new(
        datasets: &'a [NodeDataset],
        init: &'a [OlsEstimate],
        support: &'a EdgeSupport,
        weights: &'a AdaptiveWeights,
    ) -> Result<Self> {
        let k = support.node_count();
        if datasets.len() != k || init.len() != k {
            return Err(Error::Config(format!(
                "{} datasets and {} initial fits for {k} nodes",
                datasets.len(),
                init.len()
            )));
        }
        let d = weights.dim();
        if datasets.iter().any(|ds| ds.dim() != d) || init.iter().any(|o| o.coefficients.len() != d) {
            return Err(Error::Config(format!("all nodes must have dimension {d}")));
        }
        if weights.edge_count() != support.edge_count() {
            return Err(Error::Config(format!(
                "{} weight vectors for {} penalty edges",
                weights.edge_count(),
                support.edge_count()
            )));
        }
        Ok(Self { datasets, init, support, weights })
    }

    pub fn node_count(&self) -> usize {
        self.support.node_count()
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn total_samples(&self) -> usize {
        self.datasets.iter().map(NodeDataset::sample_count).sum()
    }
}

/// Primal/dual point `(β, Δ, z)` in edge-canonical form: `Δ_l`, `z_l` are the
/// copies held by the start node `s(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub dim: usize,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub dual: Vec<f64>,
}

impl Iterate {
    pub fn beta_of(&self, node: usize) -> &[f64] {
        &self.beta[node * self.dim..(node + 1) * self.dim]
    }

    pub fn delta_of(&self, edge: usize) -> &[f64] {
        &self.delta[edge * self.dim..(edge + 1) * self.dim]
    }

    pub fn dual_of(&self, edge: usize) -> &[f64] {
        &self.dual[edge * self.dim..(edge + 1) * self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.beta.len() / self.dim
    }

    pub fn betas(&self) -> Vec<Vec<f64>> {
        self.beta.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}

#[inline]
fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `sign(v_p)·max(|v_p| − t_p, 0)` coordinate-wise.
pub fn soft_threshold(v: &[f64], thresholds: &[f64]) -> Vec<f64> {
    debug_assert!(thresholds.iter().all(|t| *t >= 0.0));
    v.iter().zip(thresholds).map(|(&v, &t)| shrink(v, t)).collect()
}

/// `D_i = 2τ·deg(i) + ε`: by Gershgorin every eigenvalue of
/// `diag(D) − τL` is at least `ε`.
pub fn penalty_diagonal(degrees: &[usize], tau: f64, margin: f64) -> Vec<f64> {
    degrees.iter().map(|&deg| 2.0 * tau * deg as f64 + margin).collect()
}

/// `Δ_i ← S_{λπ/τ}(β_i − β_j − z_i/τ)` from node `i`'s side of an edge.
/// Called with `(β_s, β_e, z_l)` it yields the canonical `Δ_l`; from the end
/// node it yields exactly `−Δ_l`.
pub fn update_delta(
    beta_self: &[f64],
    beta_other: &[f64],
    dual: &[f64],
    weights: &[f64],
    lambda: f64,
    tau: f64,
    out: &mut [f64],
) {
    for p in 0..out.len() {
        let v = beta_self[p] - beta_other[p] - dual[p] / tau;
        out[p] = shrink(v, lambda * weights[p] / tau);
    }
}

/// `z_i ← z_i − τ(β_i − β_j − Δ_i)` in place; returns the largest
/// `|β_i − β_j − Δ_i|` seen.
pub fn update_dual(dual: &mut [f64], beta_self: &[f64], beta_other: &[f64], delta: &[f64], tau: f64) -> f64 {
    let mut worst = 0.0_f64;
    for p in 0..dual.len() {
        let r = beta_self[p] - beta_other[p] - delta[p];
        worst = worst.max(r.abs());
        dual[p] -= tau * r;
    }
    worst
}

/// Per-node iterate and cached local system.
#[derive(Debug, Clone)]
pub struct NodeState {
    node: usize,
    dim: usize,
    beta: Vec<f64>,
    incident: Vec<Incidence>,
    delta: Vec<f64>,
    dual: Vec<f64>,
    diag: f64,
    factor: Cholesky<f64, Dyn>,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    response_sq: f64,
    rhs: DVector<f64>,
}

impl NodeState {
    /// Factorizes `XᵀX + D_i·I` once; `Δ` copies start at `β_i − β_j` and
    /// duals at zero.
    pub fn new(
        data: &NodeDataset,
        beta0: &[f64],
        neighbor_beta0: impl Fn(usize) -> Vec<f64>,
        incident: &[Incidence],
        diag: f64,
    ) -> Result<Self> {
        let d = data.dim();
        let gram = data.gram();
        let factor = factorize(&gram + DMatrix::identity(d, d) * diag, data.node_id())
            .map_err(|_| Error::Config(format!("node {}: local system is not positive definite", data.node_id())))?;
        let mut delta = Vec::with_capacity(incident.len() * d);
        for inc in incident {
            let other = neighbor_beta0(inc.neighbor);
            delta.extend(beta0.iter().zip(&other).map(|(a, b)| a - b));
        }
        Ok(Self {
            node: data.node_id(),
            dim: d,
            beta: beta0.to_vec(),
            incident: incident.to_vec(),
            dual: vec![0.0; incident.len() * d],
            delta,
            diag,
            factor,
            gram,
            moment: data.moment(),
            response_sq: data.responses().norm_squared(),
            rhs: DVector::zeros(d),
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn incident(&self) -> &[Incidence] {
        &self.incident
    }

    /// Local `Δ` copy for the `k`-th incident edge.
    pub fn delta(&self, k: usize) -> &[f64] {
        &self.delta[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dual(&self, k: usize) -> &[f64] {
        &self.dual[k * self.dim..(k + 1) * self.dim]
    }

    pub fn diag(&self) -> f64 {
        self.diag
    }

    /// Δ-step for every incident edge given the neighbours' `βᵗ` in
    /// incident order.
    pub fn update_deltas<'b>(
        &mut self,
        neighbor_betas: impl Iterator<Item = &'b [f64]>,
        weights: &AdaptiveWeights,
        lambda: f64,
        tau: f64,
    ) {
        let d = self.dim;
        for (k, other) in neighbor_betas.enumerate() {
            let w = weights.edge(self.incident[k].edge);
            let (z, out) = (&self.dual[k * d..(k + 1) * d], &mut self.delta[k * d..(k + 1) * d]);
            update_delta(&self.beta, other, z, w, lambda, tau, out);
        }
    }

    /// β-step:
    /// `(XᵀX + D_i I)⁻¹ [Xᵀy + Σ_k (τΔ_k + z_k) + (D_i − τ deg) β_i + τ Σ_j β_j]`.
    /// Must run after [`NodeState::update_deltas`] and before the dual step.
    pub fn update_beta<'b>(&mut self, neighbor_betas: impl Iterator<Item = &'b [f64]>, tau: f64) {
        let d = self.dim;
        let deg = self.incident.len() as f64;
        let carry = self.diag - tau * deg;
        for p in 0..d {
            self.rhs[p] = self.moment[p] + carry * self.beta[p];
        }
        for k in 0..self.incident.len() {
            for p in 0..d {
                self.rhs[p] += tau * self.delta[k * d + p] + self.dual[k * d + p];
            }
        }
        for other in neighbor_betas {
            for p in 0..d {
                self.rhs[p] += tau * other[p];
            }
        }
        self.factor.solve_mut(&mut self.rhs);
        self.beta.copy_from_slice(self.rhs.as_slice());
    }

    /// Dual step given the neighbours' `βᵗ⁺¹`; returns the node's largest
    /// primal residual.
    pub fn update_duals<'b>(&mut self, neighbor_betas: impl Iterator<Item = &'b [f64]>, tau: f64) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for (k, other) in neighbor_betas.enumerate() {
            let (delta, dual) = (&self.delta[k * d..(k + 1) * d], &mut self.dual[k * d..(k + 1) * d]);
            worst = worst.max(update_dual(dual, &self.beta, other, delta, tau));
        }
        worst
    }

    /// `½‖y − Xβ‖²` through the cached Gram matrix.
    fn half_rss(&self) -> f64 {
        let b = DVector::from_column_slice(&self.beta);
        0.5 * (self.response_sq - 2.0 * self.moment.dot(&b) + b.dot(&(&self.gram * &b))).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub objective: f64,
    /// `max_l ‖β_{s(l)} − β_{e(l)} − Δ_l‖_∞`.
    pub primal_residual: f64,
    /// `‖βᵗ − βᵗ⁻¹‖_∞`.
    pub dual_residual: f64,
    pub gnorm: Option<f64>,
    /// Largest `|Δ_{s,l} + Δ_{e,l}|` or `|z_{s,l} + z_{e,l}|`; zero when the
    /// endpoint copies are exact negatives.
    pub antisymmetry_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub solution: Iterate,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryRecord>,
    pub comm: CommLedger,
    /// `D_i` per node, needed for G-norms.
    pub penalty_diag: Vec<f64>,
}

/// Runs the decentralized solver. `β` crosses `transport` once per round;
/// the dual step of iteration `t` is applied at the start of round `t + 1`,
/// once the neighbours' `βᵗ⁺¹` have arrived. With `reference` given, each
/// trajectory record carries the G-norm distance to it.
pub fn run_solver(
    problem: &Problem<'_>,
    config: &AdmmConfig,
    transport: &mut RoundTransport,
    reference: Option<&Iterate>,
) -> Result<SolverResult> {
    config.validate()?;
    let support = problem.support;
    let (k, d) = (problem.node_count(), problem.dim());
    if transport.node_count() != k {
        return Err(Error::Config(format!("transport has {} nodes, problem has {k}", transport.node_count())));
    }
    let tau = config.tau;
    let lambda = config.lambda;
    let diag = penalty_diagonal(&support.degrees(), tau, config.d_margin);

    let mut nodes = Vec::with_capacity(k);
    for i in 0..k {
        let init = problem.init;
        nodes.push(NodeState::new(
            &problem.datasets[i],
            &init[i].coefficients,
            |j| init[j].coefficients.clone(),
            support.incident(i),
            diag[i],
        )?);
    }
    // Position of edge l inside the incident lists of s(l) and e(l).
    let mut slots = vec![(0usize, 0usize); support.edge_count()];
    for node in &nodes {
        for (pos, inc) in node.incident.iter().enumerate() {
            if inc.sign > 0.0 {
                slots[inc.edge].0 = pos;
            } else {
                slots[inc.edge].1 = pos;
            }
        }
    }

    let mut prev_beta = vec![0.0; k * d];
    let mut cur_beta = vec![0.0; k * d];
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut t = 0usize;
    loop {
        for (i, node) in nodes.iter().enumerate() {
            transport.broadcast_to_neighbors(i, &node.beta)?;
        }
        let delivery = transport.close_round()?;
        let received = |i: usize| delivery.inbox(i).map(|(_, payload)| payload);
        for (i, node) in nodes.iter().enumerate() {
            if delivery.inbox(i).count() != node.incident.len() {
                return Err(Error::Protocol(format!("node {i}: transport links differ from the penalty support")));
            }
        }

        if t > 0 {
            let mut primal = 0.0_f64;
            for (i, node) in nodes.iter_mut().enumerate() {
                primal = primal.max(node.update_duals(received(i), tau));
            }
            for (dst, node) in cur_beta.chunks_mut(d).zip(&nodes) {
                dst.copy_from_slice(&node.beta);
            }
            let dual_res = cur_beta.iter().zip(&prev_beta).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let objective = nodes.iter().map(NodeState::half_rss).sum::<f64>()
                + penalty_value(support, problem.weights, lambda, &cur_beta);
            let gnorm = reference.map(|r| gnorm_distance(&gather(&nodes, &slots, support, d), r, &diag, tau));
            trajectory.push(TrajectoryRecord {
                iteration: t,
                objective,
                primal_residual: primal,
                dual_residual: dual_res,
                gnorm,
                antisymmetry_gap: antisymmetry_gap(&nodes, &slots, d),
            });

            if primal <= config.primal_tol && dual_res <= config.dual_tol {
                converged = true;
                break;
            }
            if t >= config.max_iters {
                break;
            }
        }

        for (i, node) in nodes.iter_mut().enumerate() {
            node.update_deltas(received(i), problem.weights, lambda, tau);
        }
        for (dst, node) in prev_beta.chunks_mut(d).zip(&nodes) {
            dst.copy_from_slice(&node.beta);
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            node.update_beta(received(i), tau);
        }
        t += 1;
    }

    Ok(SolverResult {
        solution: gather(&nodes, &slots, support, d),
        iterations: t,
        converged,
        trajectory,
        comm: transport.ledger().clone(),
        penalty_diag: diag,
    })
}

fn gather(nodes: &[NodeState], slots: &[(usize, usize)], support: &EdgeSupport, d: usize) -> Iterate {
    let beta = nodes.iter().flat_map(|n| n.beta.iter().copied()).collect();
    let mut delta = Vec::with_capacity(slots.len() * d);
    let mut dual = Vec::with_capacity(slots.len() * d);
    for (l, &(pos, _)) in slots.iter().enumerate() {
        let s = &nodes[support.edges()[l].0];
        delta.extend_from_slice(s.delta(pos));
        dual.extend_from_slice(s.dual(pos));
    }
    Iterate { dim: d, beta, delta, dual }
}

fn antisymmetry_gap(nodes: &[NodeState], slots: &[(usize, usize)], d: usize) -> f64 {
    let mut gap = 0.0_f64;
    for node in nodes {
        for (pos, inc) in node.incident.iter().enumerate() {
            if inc.sign < 0.0 {
                continue;
            }
            let other = &nodes[inc.neighbor];
            let back = slots[inc.edge].1;
            for p in 0..d {
                gap = gap.max((node.delta(pos)[p] + other.delta(back)[p]).abs());
                gap = gap.max((node.dual(pos)[p] + other.dual(back)[p]).abs());
            }
        }
    }
    gap
}

fn penalty_value(support: &EdgeSupport, weights: &AdaptiveWeights, lambda: f64, beta: &[f64]) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let d = weights.dim();
    let mut total = 0.0;
    for (l, &(s, e)) in support.edges().iter().enumerate() {
        let w = weights.edge(l);
        for p in 0..d {
            total += w[p] * (beta[s * d + p] - beta[e * d + p]).abs();
        }
    }
    lambda * total
}

/// `½ Σ_i ‖y_i − X_i β_i‖² + λ Σ_l Σ_p π_{l,p} |β_{s(l),p} − β_{e(l),p}|`
/// with `beta` stacked node by node.
pub fn objective_value(problem: &Problem<'_>, lambda: f64, beta: &[f64]) -> f64 {
    let d = problem.dim();
    let fit: f64 = problem
        .datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| 0.5 * ds.residual_sum_of_squares(&beta[i * d..(i + 1) * d]))
        .sum();
    fit + penalty_value(problem.support, problem.weights, lambda, beta)
}

/// Result of the single-machine classical ADMM.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub solution: Iterate,
    pub iterations: usize,
    pub converged: bool,
}

/// Classical ADMM with the exact coupled β-step
/// `(XᵀX + τ L⊗I_d)⁻¹ [Xᵀy + Hᵀ(τΔ + z)]`. Only practical for small `K·d`;
/// it serves as an oracle for [`run_solver`].
pub fn centralized_reference_solve(problem: &Problem<'_>, config: &AdmmConfig) -> Result<ReferenceSolution> {
    config.validate()?;
    let support = problem.support;
    let (k, d, m) = (problem.node_count(), problem.dim(), problem.support.edge_count());
    let (tau, lambda) = (config.tau, config.lambda);

    let mut system = DMatrix::zeros(k * d, k * d);
    let mut moment = DVector::zeros(k * d);
    for (i, ds) in problem.datasets.iter().enumerate() {
        system.view_mut((i * d, i * d), (d, d)).copy_from(&ds.gram());
        moment.rows_mut(i * d, d).copy_from(&ds.moment());
    }
    for (r, c, v) in laplacian(support).entries() {
        for p in 0..d {
            system[(r * d + p, c * d + p)] += tau * v;
        }
    }
    let factor = Cholesky::new(system)
        .ok_or_else(|| Error::Config("coupled system XᵀX + τL⊗I is not positive definite".into()))?;

    let mut beta: Vec<f64> = problem.init.iter().flat_map(|o| o.coefficients.iter().copied()).collect();
    let mut delta = vec![0.0; m * d];
    for (l, &(s, e)) in support.edges().iter().enumerate() {
        for p in 0..d {
            delta[l * d + p] = beta[s * d + p] - beta[e * d + p];
        }
    }
    let mut dual = vec![0.0; m * d];
    let mut converged = false;
    let mut t = 0;
    while t < config.max_iters {
        for (l, &(s, e)) in support.edges().iter().enumerate() {
            let (bs, be) = (&beta[s * d..(s + 1) * d], &beta[e * d..(e + 1) * d]);
            update_delta(bs, be, &dual[l * d..(l + 1) * d], problem.weights.edge(l), lambda, tau, &mut delta[l * d..(l + 1) * d]);
        }
        let mut rhs = moment.clone();
        for (l, &(s, e)) in support.edges().iter().enumerate() {
            for p in 0..d {
                let v = tau * delta[l * d + p] + dual[l * d + p];
                rhs[s * d + p] += v;
                rhs[e * d + p] -= v;
            }
        }
        factor.solve_mut(&mut rhs);
        let change = rhs.iter().zip(&beta).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        beta.copy_from_slice(rhs.as_slice());
        let mut primal = 0.0_f64;
        for (l, &(s, e)) in support.edges().iter().enumerate() {
            let (bs, be) = (&beta[s * d..(s + 1) * d], &beta[e * d..(e + 1) * d]);
            let (dl, zl) = (&delta[l * d..(l + 1) * d], &mut dual[l * d..(l + 1) * d]);
            primal = primal.max(update_dual(zl, bs, be, dl, tau));
        }
        t += 1;
        if primal <= config.primal_tol && change <= config.dual_tol {
            converged = true;
            break;
        }
    }
    Ok(ReferenceSolution { solution: Iterate { dim: d, beta, delta, dual }, iterations: t, converged })
}

/// Largest violation of the optimality conditions of the constrained
/// problem, in the solver's multiplier convention:
///
/// * stationarity `‖X_iᵀX_iβ_i − X_iᵀy_i − Σ_l [H]_{l,i} z_l‖_∞` per node,
/// * feasibility `‖Hβ − Δ‖_∞`,
/// * multiplier bounds `|z_{l,p}| ≤ λπ_{l,p}`, and `z_{l,p} = −λπ_{l,p}
///   sign(Δ_{l,p})` where `Δ_{l,p} ≠ 0`.
pub fn kkt_residual(problem: &Problem<'_>, lambda: f64, point: &Iterate) -> f64 {
    let support = problem.support;
    let d = problem.dim();
    let mut worst = 0.0_f64;
    for (i, ds) in problem.datasets.iter().enumerate() {
        let b = DVector::from_column_slice(point.beta_of(i));
        let mut g = ds.gram() * b - ds.moment();
        for inc in support.incident(i) {
            let z = point.dual_of(inc.edge);
            for p in 0..d {
                g[p] -= inc.sign * z[p];
            }
        }
        worst = worst.max(g.amax());
    }
    for (l, &(s, e)) in support.edges().iter().enumerate() {
        let (bs, be) = (point.beta_of(s), point.beta_of(e));
        let (dl, zl, w) = (point.delta_of(l), point.dual_of(l), problem.weights.edge(l));
        for p in 0..d {
            worst = worst.max((bs[p] - be[p] - dl[p]).abs());
            let bound = lambda * w[p];
            worst = worst.max((zl[p].abs() - bound).max(0.0));
            if dl[p] != 0.0 {
                worst = worst.max((zl[p] + bound * dl[p].signum()).abs());
            }
        }
    }
    worst
}

/// `√[(β−β*)ᵀ (D⊗I_d) (β−β*) + (1/τ)‖z−z*‖²]`; the Δ block has zero weight.
pub fn gnorm_distance(u: &Iterate, reference: &Iterate, penalty_diag: &[f64], tau: f64) -> f64 {
    let d = u.dim;
    let beta_part: f64 = u
        .beta
        .chunks(d)
        .zip(reference.beta.chunks(d))
        .zip(penalty_diag)
        .map(|((a, b), &di)| di * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    let dual_part: f64 = u.dual.iter().zip(&reference.dual).map(|(x, y)| (x - y) * (x - y)).sum();
    (beta_part + dual_part / tau).sqrt()
}
