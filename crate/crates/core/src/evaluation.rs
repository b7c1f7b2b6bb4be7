//! Cluster extraction, accuracy metrics and the statistical diagnostics used
//! to check selection consistency, asymptotic normality and linear
//! convergence empirically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::{augment_incidence, build_mst, incidence_matrix, similarity_weights, EdgeSupport, NetworkGraph, UnionFind};
use crate::local::{fit_local_ols, NodeDataset};
use crate::rng::replication_seed;
use crate::synthetic::{generate_datasets, ClusterModel};

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Distances at or below this are treated as converged and dropped from
/// rate fits.
pub const RATE_FIT_FLOOR: f64 = 1e-12;

/// Clusters read off the fused edges of an estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Labels `0..Ŝ`, numbered by smallest member.
    pub cluster_of: Vec<usize>,
    pub cluster_count: usize,
    /// Support edges whose whole `Δ̂_l` is below tolerance.
    pub fused_edges: Vec<usize>,
    /// Set when an unfused edge joins two nodes of the same component, which
    /// can only happen on supports with cycles.
    pub intransitive: bool,
}

/// Edge `l` is fused iff `max_p |Δ̂_{l,p}| ≤ zero_tol`; clusters are the
/// connected components of the fused edges.
pub fn extract_clusters(delta_hat: &[f64], dim: usize, support: &EdgeSupport, zero_tol: f64) -> ClusterPartition {
    assert_eq!(delta_hat.len(), support.edge_count() * dim, "one Δ̂ vector per support edge");
    let k = support.node_count();
    let mut uf = UnionFind::new(k);
    let mut fused_edges = Vec::new();
    for (l, &(s, e)) in support.edges().iter().enumerate() {
        if delta_hat[l * dim..(l + 1) * dim].iter().all(|v| v.abs() <= zero_tol) {
            fused_edges.push(l);
            uf.union(s, e);
        }
    }
    let cluster_of = canonical_labels(&mut uf, k);
    let cluster_count = cluster_of.iter().max().map_or(0, |m| m + 1);
    let intransitive = support
        .edges()
        .iter()
        .enumerate()
        .any(|(l, &(s, e))| fused_edges.binary_search(&l).is_err() && cluster_of[s] == cluster_of[e]);
    ClusterPartition { cluster_of, cluster_count, fused_edges, intransitive }
}

fn canonical_labels(uf: &mut UnionFind, k: usize) -> Vec<usize> {
    let mut root_label = vec![usize::MAX; k];
    let mut next = 0;
    (0..k)
        .map(|i| {
            let r = uf.find(i);
            if root_label[r] == usize::MAX {
                root_label[r] = next;
                next += 1;
            }
            root_label[r]
        })
        .collect()
}

/// `(1/(K·d)) Σ_i ‖β̂_i − β_{c(i)}‖²` with `beta_hat` stacked node by node.
pub fn coefficient_mse(beta_hat: &[f64], truth: &ClusterModel) -> f64 {
    let truth_beta = truth.stacked_beta();
    assert_eq!(beta_hat.len(), truth_beta.len(), "dimension mismatch");
    beta_hat.iter().zip(&truth_beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth_beta.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionAccuracy {
    pub exact_recovery: bool,
    pub rand_index: f64,
    pub s_hat: usize,
}

/// Compares an estimated labelling with the true one. Both are arbitrary
/// label vectors; only the induced partitions matter.
pub fn selection_accuracy(estimated: &[usize], truth: &[usize]) -> SelectionAccuracy {
    assert_eq!(estimated.len(), truth.len(), "partitions over different node sets");
    let k = estimated.len();
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            pairs += 1;
            if (estimated[i] == estimated[j]) == (truth[i] == truth[j]) {
                agree += 1;
            }
        }
    }
    let mut labels = estimated.to_vec();
    labels.sort_unstable();
    labels.dedup();
    SelectionAccuracy {
        exact_recovery: agree == pairs,
        rand_index: if pairs == 0 { 1.0 } else { agree as f64 / pairs as f64 },
        s_hat: labels.len(),
    }
}

/// True when every cluster with at least two members spans a connected
/// subtree of `tree`, i.e. has exactly `size − 1` internal tree edges.
pub fn clusters_connected_in_tree(tree: &EdgeSupport, truth: &ClusterModel) -> bool {
    let mut inner = vec![0usize; truth.cluster_count()];
    for &(s, e) in tree.edges() {
        if truth.assignment[s] == truth.assignment[e] {
            inner[truth.assignment[s]] += 1;
        }
    }
    (0..truth.cluster_count()).all(|c| {
        let size = truth.assignment.iter().filter(|&&a| a == c).count();
        size < 2 || inner[c] == size - 1
    })
}

/// Fraction of `replications` fresh datasets whose similarity MST keeps
/// every true cluster connected.
pub fn tree_connectivity_rate(graph: &NetworkGraph, truth: &ClusterModel, n: usize, replications: usize, seed: u64) -> Result<f64> {
    if replications == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    truth.audit(graph)?;
    let mut hits = 0;
    for rep in 0..replications {
        let data = generate_datasets(truth, n, replication_seed(seed, rep as u64))?;
        let ols = data.iter().map(|ds| fit_local_ols(ds, 0.0)).collect::<Result<Vec<_>>>()?;
        let tree = build_mst(graph, &similarity_weights(graph, &ols)?)?;
        if clusters_connected_in_tree(tree.support(), truth) {
            hits += 1;
        }
    }
    Ok(hits as f64 / replications as f64)
}

/// Index set `A*` inside the stacked `Δ = (H̃ ⊗ I_d) β`: coordinates of tree
/// edges whose true difference is nonzero, followed by the `d` coordinates
/// of the unpenalized mean row.
pub fn active_set(tree: &EdgeSupport, truth: &ClusterModel) -> Vec<usize> {
    let d = truth.dim();
    let mut active = Vec::new();
    for (l, &(s, e)) in tree.edges().iter().enumerate() {
        let (bs, be) = (truth.beta_of(s), truth.beta_of(e));
        active.extend((0..d).filter(|&p| bs[p] != be[p]).map(|p| l * d + p));
    }
    let mean_row = tree.edge_count() * d;
    active.extend(mean_row..mean_row + d);
    active
}

/// `(H̃ ⊗ I_d) β`: edge differences followed by `(1/√K) Σ_i β_i`.
pub fn augmented_delta(tree: &EdgeSupport, beta: &[f64], d: usize) -> Vec<f64> {
    let k = tree.node_count();
    let mut out = Vec::with_capacity(k * d);
    for &(s, e) in tree.edges() {
        out.extend((0..d).map(|p| beta[s * d + p] - beta[e * d + p]));
    }
    let scale = 1.0 / (k as f64).sqrt();
    out.extend((0..d).map(|p| scale * (0..k).map(|i| beta[i * d + p]).sum::<f64>()));
    out
}

/// `C_A`: rows and columns `active` of
/// `(1/N) (X M)ᵀ (X M)`, `M = (H̃ ⊗ I_d)⁻¹`, `X = blockdiag(X_i)`.
pub fn design_covariance(datasets: &[NodeDataset], tree: &EdgeSupport, active: &[usize]) -> Result<DMatrix<f64>> {
    let k = tree.node_count();
    if !tree.is_tree() || datasets.len() != k {
        return Err(Error::Diagnostic("design covariance needs a spanning tree and one dataset per node".into()));
    }
    let d = datasets[0].dim();
    let h_tilde = augment_incidence(&incidence_matrix(tree));
    let inv = h_tilde
        .try_inverse()
        .ok_or_else(|| Error::Diagnostic("augmented incidence matrix is singular".into()))?;
    let n_total: usize = datasets.iter().map(NodeDataset::sample_count).sum();
    // Column a of M restricted to node i's block is inv[i, a / d] at row p = a % d.
    let mut c = DMatrix::zeros(active.len(), active.len());
    let grams: Vec<DMatrix<f64>> = datasets.iter().map(NodeDataset::gram).collect();
    for (u, &a) in active.iter().enumerate() {
        for (v, &b) in active.iter().enumerate().skip(u) {
            let (pa, pb) = (a % d, b % d);
            let value: f64 = (0..k).map(|i| inv[(i, a / d)] * inv[(i, b / d)] * grams[i][(pa, pb)]).sum();
            c[(u, v)] = value / n_total as f64;
            c[(v, u)] = c[(u, v)];
        }
    }
    Ok(c)
}

/// One replication's estimate restricted to `A*`, with its truth and `C_A`.
#[derive(Debug, Clone)]
pub struct ActiveSample {
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub selected_correctly: bool,
}

/// Restricts `(H̃ ⊗ I_d) β̂` and `(H̃ ⊗ I_d) β*` to `A*` of `tree`.
/// `selected_correctly` reports whether `β̂` has exact zeros precisely off `A*`
/// among the edge coordinates.
pub fn active_sample(
    datasets: &[NodeDataset],
    tree: &EdgeSupport,
    truth: &ClusterModel,
    beta_hat: &[f64],
    zero_tol: f64,
) -> Result<ActiveSample> {
    let d = truth.dim();
    let active = active_set(tree, truth);
    let est = augmented_delta(tree, beta_hat, d);
    let star = augmented_delta(tree, &truth.stacked_beta(), d);
    let edge_coords = tree.edge_count() * d;
    let selected_correctly =
        (0..edge_coords).all(|a| (est[a].abs() > zero_tol) == active.binary_search(&a).is_ok());
    Ok(ActiveSample {
        estimate: active.iter().map(|&a| est[a]).collect(),
        truth: active.iter().map(|&a| star[a]).collect(),
        covariance: design_covariance(datasets, tree, &active)?,
        selected_correctly,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    /// Critical value of the statistic at the requested level.
    pub critical_value: f64,
    pub sample_size: usize,
    pub pass: bool,
}

/// Standardizes every replication's `√N (Δ̂_A − Δ*_A)` by the theoretical
/// covariance `σ² C_A⁻¹` and runs a one-sample Kolmogorov–Smirnov test of the
/// pooled coordinates against `N(0, 1)`.
pub fn normality_diagnostic(
    estimates: &[Vec<f64>],
    truth: &[f64],
    n_total: usize,
    sigma: f64,
    c_active: &DMatrix<f64>,
    alpha: f64,
) -> Result<NormalityReport> {
    if estimates.is_empty() {
        return Err(Error::Diagnostic("no replications".into()));
    }
    let standardizer = Standardizer::new(c_active, n_total, sigma)?;
    let mut pooled = Vec::with_capacity(estimates.len() * truth.len());
    for est in estimates {
        pooled.extend(standardizer.apply(est, truth)?);
    }
    ks_normality(&mut pooled, alpha)
}

/// Maps `Δ̂_A` to `Lᵀ √N (Δ̂_A − Δ*_A) / σ` where `C_A = L Lᵀ`, which is
/// standard normal under the limiting law.
#[derive(Debug, Clone)]
pub struct Standardizer {
    lower: DMatrix<f64>,
    scale: f64,
}

impl Standardizer {
    pub fn new(c_active: &DMatrix<f64>, n_total: usize, sigma: f64) -> Result<Self> {
        if !c_active.is_square() || c_active.nrows() == 0 {
            return Err(Error::Diagnostic("covariance must be a nonempty square matrix".into()));
        }
        if !(sigma > 0.0) || n_total == 0 {
            return Err(Error::Diagnostic("need sigma > 0 and N > 0".into()));
        }
        let eig = c_active.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
        let chol = if lo > hi * 1e-14 { nalgebra::Cholesky::new(c_active.clone()) } else { None };
        let Some(chol) = chol else {
            return Err(Error::Diagnostic(format!("covariance is singular (condition number {:.3e})", hi / lo.max(0.0))));
        };
        Ok(Self { lower: chol.l(), scale: (n_total as f64).sqrt() / sigma })
    }

    pub fn apply(&self, estimate: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
        let m = self.lower.nrows();
        if estimate.len() != m || truth.len() != m {
            return Err(Error::Diagnostic(format!("expected {m} active coordinates")));
        }
        let diff = DVector::from_iterator(m, estimate.iter().zip(truth).map(|(a, b)| self.scale * (a - b)));
        Ok(self.lower.tr_mul(&diff).iter().copied().collect())
    }
}

/// One-sample KS test of `sample` against `N(0, 1)`; sorts in place.
pub fn ks_normality(sample: &mut [f64], alpha: f64) -> Result<NormalityReport> {
    if sample.is_empty() || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Diagnostic("need a nonempty sample and alpha in (0, 1)".into()));
    }
    let ks = ks_statistic_normal(sample);
    let n = sample.len();
    let p_value = kolmogorov_p_value(ks, n);
    Ok(NormalityReport {
        ks_statistic: ks,
        p_value,
        critical_value: ks_critical_value(alpha, n),
        sample_size: n,
        pass: p_value >= alpha,
    })
}

/// `sup_x |F_n(x) − Φ(x)|`; sorts `sample` in place.
pub fn ks_statistic_normal(sample: &mut [f64]) -> f64 {
    let std = Normal::standard();
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample.iter().enumerate().fold(0.0_f64, |m, (i, &x)| {
        let f = std.cdf(x);
        m.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic Kolmogorov tail with Stephens' finite-sample adjustment.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let t = (sn + 0.12 + 0.11 / sn) * d;
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * t * t).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Statistic value whose p-value equals `alpha`, by bisection.
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_p_value(mid, n) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub geometric_ratio: f64,
    pub points: usize,
}

/// Least-squares line through `(t, ln d_t)` after dropping the first
/// `burn_in` entries and everything from the first distance at or below
/// [`RATE_FIT_FLOOR`].
pub fn convergence_rate_fit(distances: &[f64], burn_in: usize) -> Result<RateFit> {
    let usable = distances.iter().position(|&v| !(v > RATE_FIT_FLOOR)).unwrap_or(distances.len());
    if usable < burn_in + 10 {
        return Err(Error::Diagnostic(format!(
            "need at least 10 positive distances after burn-in {burn_in}, have {}",
            usable.saturating_sub(burn_in)
        )));
    }
    let pts: Vec<(f64, f64)> = (burn_in..usable).map(|t| (t as f64, distances[t].ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept: my - slope * mx, r_squared, geometric_ratio: slope.exp(), points: pts.len() })
}
