//! Likelihood-free (approximate Bayesian computation) inference engine.
//!
//! The crate is organized around the components an ABC run needs:
//!
//! - [`graph`]: probabilistic models as DAGs of random variables with
//!   forward simulation.
//! - [`summaries`]: summary statistics, discrepancy measures and the
//!   synthetic-likelihood approximation.
//! - [`kernels`]: perturbation kernels with adaptive weighted covariance.
//! - [`samplers`]: rejection ABC, population Monte Carlo ABC, and
//!   population Monte Carlo with an approximate likelihood, all recording
//!   their output in a [`samplers::Journal`].
//! - [`executor`]: an instrumented map-collect layer with sequential,
//!   static-chunked and dynamic-greedy scheduling over in-process worker
//!   lanes, plus a pure scheduling simulator.
//! - [`lorenz`]: the stochastic 40-site Lorenz forecast model used as the
//!   simulation benchmark.
//! - [`metrics`]: speedup, efficiency and load-imbalance analytics over
//!   executor traces.
//!
//! Determinism is a design contract: given a master seed, every result is
//! identical across executor modes and worker counts, because each map task
//! derives its own generator from the seed and its task coordinates.

pub mod executor;
pub mod graph;
pub mod kernels;
pub mod lorenz;
pub mod metrics;
pub mod models;
pub mod samplers;
pub mod seed;
pub mod summaries;

pub use executor::{ExecutorSpec, MapResult, TaskTrace};
pub use graph::{
    BinaryOp, DataSet, GraphBuilder, GraphError, ModelGraph, ModelNode, NodeId, NodeKind,
    ParameterVector, Root, SimulationError, Simulator,
};
pub use kernels::{
    weighted_covariance, JointKernel, KernelComponent, KernelError, KernelKind, PreparedKernel,
};
pub use samplers::{
    adapt_epsilon, pmc, pmcabc, rejection_abc, Journal, PmcConfig, PmcabcConfig, RejectionConfig,
    SamplerError,
};
pub use summaries::{
    euclidean_distance, synthetic_likelihood, ApproxLikelihood, DatasetDistance, Distance,
    Statistics, SummaryError,
};
