//! Clustering of linear-regression models held by the nodes of a network.
//!
//! Each node fits a local least-squares model. Edge weights derived from the
//! differences of those local fits select a minimum spanning tree, and an
//! adaptive fused-lasso penalty on the tree edges pulls neighbouring models
//! together until whole subgroups share one coefficient vector. The penalized
//! problem is solved by a decentralized generalized ADMM in which every node
//! only talks to its tree neighbours; the message exchange is simulated by a
//! synchronous round transport that counts every scalar on the wire.
//!
//! Module map:
//!
//! * [`graph`]: network graphs, similarity weights, Kruskal MST, incidence and Laplacian algebra.
//! * [`local`]: per-node least squares and adaptive penalty weights.
//! * [`admm`]: the decentralized solver, a centralized reference solver and diagnostics.
//! * [`network`]: round-based transport and communication ledger.
//! * [`synthetic`]: random geometric networks, clustered ground truth and datasets.
//! * [`evaluation`]: partitions, accuracy metrics and statistical diagnostics.
//! * [`experiment`]: configuration, tuning-parameter selection and replicated runs.

pub mod admm;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod graph;
pub mod local;
pub mod network;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
