//! Node-local least squares and the adaptive fusion weights built from it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::EdgeSupport;

/// Default clamp for adaptive weights when two local fits coincide.
pub const DEFAULT_WEIGHT_CAP: f64 = 1e12;

/// Relative eigenvalue threshold below which a Gram direction counts as null.
const RANK_TOLERANCE: f64 = 1e-12;

/// One node's data: an `n × d` design and `n` responses.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataset {
    node_id: usize,
    design: DMatrix<f64>,
    responses: DVector<f64>,
}

impl NodeDataset {
    pub fn new(node_id: usize, design: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        if design.nrows() != responses.len() {
            return Err(Error::Config(format!(
                "node {node_id}: design has {} rows but {} responses",
                design.nrows(),
                responses.len()
            )));
        }
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::Config(format!("node {node_id}: empty dataset")));
        }
        if design.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("node {node_id}: non-finite entry in data")));
        }
        Ok(Self { node_id, design, responses })
    }

    pub fn node_id(&self) -> usize {
        self.node_id
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn sample_count(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// `XᵀX`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.design.tr_mul(&self.design)
    }

    /// `Xᵀy`.
    pub fn moment(&self) -> DVector<f64> {
        self.design.tr_mul(&self.responses)
    }

    /// `‖y - Xβ‖²`.
    pub fn residual_sum_of_squares(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        (&self.responses - &self.design * b).norm_squared()
    }
}

/// Local least-squares coefficients of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsEstimate {
    pub coefficients: Vec<f64>,
    pub gram_rank: usize,
}

impl AsRef<[f64]> for OlsEstimate {
    fn as_ref(&self) -> &[f64] {
        &self.coefficients
    }
}

/// Solves `(XᵀX + ridge·I) β = Xᵀy` through a Cholesky factorization.
/// With `ridge = 0` a rank-deficient Gram matrix is an error.
pub fn fit_local_ols(data: &NodeDataset, ridge: f64) -> Result<OlsEstimate> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be a finite nonnegative number, got {ridge}")));
    }
    let d = data.dim();
    let gram = data.gram();
    let gram_rank = numeric_rank(&gram);
    if ridge == 0.0 && gram_rank < d {
        return Err(Error::Estimation {
            node: data.node_id,
            reason: format!("Gram matrix has rank {gram_rank} < {d}; set a positive ridge"),
        });
    }
    let system = gram + DMatrix::identity(d, d) * ridge;
    let chol = factorize(system, data.node_id)?;
    let coefficients = chol.solve(&data.moment()).as_slice().to_vec();
    Ok(OlsEstimate { coefficients, gram_rank })
}

pub(crate) fn factorize(system: DMatrix<f64>, node: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(system).ok_or_else(|| Error::Estimation {
        node,
        reason: "matrix is not positive definite".into(),
    })
}

fn numeric_rank(gram: &DMatrix<f64>) -> usize {
    let eig = gram.clone().symmetric_eigenvalues();
    let top = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return 0;
    }
    eig.iter().filter(|v| **v > top * RANK_TOLERANCE).count()
}

/// Coordinate-wise `1 / |a_p - b_p|^γ`, clamped to `cap`. Symmetric in its
/// arguments.
pub fn adaptive_weights(a: &[f64], b: &[f64], gamma: f64, cap: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let w = (x - y).abs().powf(gamma).recip();
            if w.is_nan() || w > cap {
                cap
            } else {
                w
            }
        })
        .collect()
}

/// Adaptive weight vectors for every edge of a penalty support.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights {
    dim: usize,
    gamma: f64,
    cap: f64,
    values: Vec<f64>,
}

impl AdaptiveWeights {
    pub fn for_support(support: &EdgeSupport, ols: &[OlsEstimate], gamma: f64, cap: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(cap > 0.0) {
            return Err(Error::Config(format!("gamma ({gamma}) and cap ({cap}) must be positive")));
        }
        if ols.len() != support.node_count() {
            return Err(Error::Config(format!(
                "{} estimates for {} nodes",
                ols.len(),
                support.node_count()
            )));
        }
        let dim = ols[0].coefficients.len();
        let mut values = Vec::with_capacity(support.edge_count() * dim);
        for &(s, e) in support.edges() {
            if ols[s].coefficients.len() != dim || ols[e].coefficients.len() != dim {
                return Err(Error::Config("coefficient dimension differs across nodes".into()));
            }
            values.extend(adaptive_weights(&ols[s].coefficients, &ols[e].coefficients, gamma, cap));
        }
        Ok(Self { dim, gamma, cap, values })
    }

    /// Same weight vector on every edge; used by tests and plain (non-adaptive) fused lasso.
    pub fn uniform(support: &EdgeSupport, dim: usize, value: f64) -> Self {
        Self { dim, gamma: 0.0, cap: value, values: vec![value; support.edge_count() * dim] }
    }

    pub fn from_values(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::Config("weight vector length is not a multiple of the dimension".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("adaptive weights must be finite and positive".into()));
        }
        let cap = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self { dim, gamma: 0.0, cap, values })
    }

    pub fn edge(&self, l: usize) -> &[f64] {
        &self.values[l * self.dim..(l + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edge_count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}
