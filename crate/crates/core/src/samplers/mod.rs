//! Inference schemes: rejection ABC, population Monte Carlo ABC, and
//! population Monte Carlo with an approximate likelihood.
//!
//! All per-particle work (perturbation, simulation, distance or likelihood
//! evaluation, importance weights) runs as map tasks on the executor; the
//! orchestrator only resamples, normalizes and assembles the journal.
//! Each task seeds its own generator from the master seed and its task
//! coordinates, which makes every journal's numeric content independent of
//! the executor mode and worker count.

mod journal;
mod pmc;
mod pmcabc;
mod rejection;

pub use journal::{GenerationRecord, Journal};
pub use pmc::{pmc, PmcConfig};
pub use pmcabc::{pmcabc, PmcabcConfig};
pub use rejection::{rejection_abc, RejectionConfig};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{DataSet, GraphError, ModelGraph, ParameterVector, SimulationError};
use crate::kernels::{CovarianceMatrix, JointKernel, KernelError, PreparedKernel};
use crate::summaries::{DatasetDistance, SummaryError};

/// Stream tag for the simulation/acceptance map phase.
pub(crate) const STREAM_SIM: u64 = 1;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "particle {particle} exceeded {max_attempts} attempts; smallest distance seen {best_distance}"
    )]
    MaxAttemptsExceeded {
        particle: usize,
        max_attempts: u64,
        best_distance: f64,
    },
    #[error("failed to draw particle {particle} from the prior: {source}")]
    PriorSampling {
        particle: usize,
        source: SimulationError,
    },
    #[error("importance denominator is zero: the kernel cannot reach the proposed particle")]
    ZeroKernelDenominator,
    #[error("all importance weights are zero")]
    DegenerateWeights,
    #[error("generation {0} does not exist")]
    NoSuchGeneration(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// Threshold for generation `t`: the larger of the empirical
/// `quantile`-level of the previous generation's accepted distances and the
/// scheduled value.
///
/// The quantile uses the lower-interpolation convention
/// (`sorted[floor(q * (n - 1))]`), so it always returns an observed
/// distance.
pub fn adapt_epsilon(prev_distances: &[f64], quantile: f64, scheduled: f64) -> f64 {
    assert!(
        !prev_distances.is_empty(),
        "epsilon adaptation needs at least one distance"
    );
    assert!(
        quantile > 0.0 && quantile <= 1.0,
        "quantile must lie in (0, 1]"
    );
    let mut sorted = prev_distances.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("distances are comparable"));
    let idx = ((quantile * (sorted.len() - 1) as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx].max(scheduled)
}

/// Unnormalized importance weight of an accepted particle:
/// `prior(theta) / sum_k prev_weight_k * K(theta | prev_particle_k, sigma)`.
pub fn pmcabc_weight(
    prior_density: f64,
    theta: &ParameterVector,
    prev_particles: &[ParameterVector],
    prev_weights: &[f64],
    sigma: &CovarianceMatrix,
    kernel: &JointKernel,
) -> Result<f64, SamplerError> {
    let prepared = kernel.prepare(sigma)?;
    pmcabc_weight_prepared(prior_density, theta, prev_particles, prev_weights, &prepared)
}

pub(crate) fn pmcabc_weight_prepared(
    prior_density: f64,
    theta: &ParameterVector,
    prev_particles: &[ParameterVector],
    prev_weights: &[f64],
    kernel: &PreparedKernel<'_>,
) -> Result<f64, SamplerError> {
    if prior_density == 0.0 {
        return Ok(0.0);
    }
    let denominator = kernel_mixture_density(theta, prev_particles, prev_weights, kernel);
    if !(denominator > 0.0) || !denominator.is_finite() {
        return Err(SamplerError::ZeroKernelDenominator);
    }
    Ok(prior_density / denominator)
}

pub(crate) fn kernel_mixture_density(
    theta: &ParameterVector,
    prev_particles: &[ParameterVector],
    prev_weights: &[f64],
    kernel: &PreparedKernel<'_>,
) -> f64 {
    prev_particles
        .iter()
        .zip(prev_weights)
        .map(|(particle, &weight)| weight * kernel.density(theta, particle))
        .sum()
}

/// Index drawn from the categorical distribution over normalized weights.
pub(crate) fn resample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Normalizes raw weights in place; all-zero weights are an error.
pub(crate) fn normalize_weights(weights: &mut [f64]) -> Result<(), SamplerError> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SamplerError::DegenerateWeights);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

pub(crate) fn check_observed(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: Option<&DatasetDistance>,
) -> Result<(), SamplerError> {
    if graph.roots().is_empty() {
        return Err(SamplerError::InvalidConfig(
            "inference needs a graph with at least one root".into(),
        ));
    }
    if observed.arrays.len() != graph.roots().len() {
        return Err(SamplerError::InvalidConfig(format!(
            "observed dataset has {} arrays but the graph has {} roots",
            observed.arrays.len(),
            graph.roots().len()
        )));
    }
    if let Some(distance) = distance {
        if distance.n_roots() != graph.roots().len() {
            return Err(SamplerError::InvalidConfig(format!(
                "distance covers {} roots but the graph has {}",
                distance.n_roots(),
                graph.roots().len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn config_echo(kind: &str, config: &impl Serialize) -> serde_json::Value {
    serde_json::json!({ "kind": kind, "config": config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelComponent;
    use crate::seed::task_rng;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn epsilon_adaptation_table_cases() {
        let distances: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(adapt_epsilon(&distances, 0.1, 0.0), 1.0);
        assert_eq!(adapt_epsilon(&distances, 1.0, 0.0), 10.0);
        assert_eq!(adapt_epsilon(&distances, 0.1, 50.0), 50.0);
        assert_eq!(adapt_epsilon(&distances, 0.5, 0.0), 5.0);
        // Unsorted input is sorted internally.
        assert_eq!(adapt_epsilon(&[3.0, 1.0, 2.0], 0.5, 0.0), 2.0);
    }

    #[test]
    fn single_previous_particle_weight_is_prior_over_kernel() {
        let kernel = JointKernel::new(vec![KernelComponent::gaussian(vec![0])], 1).unwrap();
        let sigma = DMatrix::identity(1, 1);
        let prev = vec![ParameterVector::new(vec![0.0])];
        let theta = ParameterVector::new(vec![0.7]);
        let prior = 0.25;
        let got = pmcabc_weight(prior, &theta, &prev, &[1.0], &sigma, &kernel).unwrap();
        let k = kernel.density(&theta, &prev[0], &sigma).unwrap();
        assert_relative_eq!(got, prior / k, max_relative = 1e-12);
    }

    #[test]
    fn zero_prior_means_zero_weight() {
        let kernel = JointKernel::new(vec![KernelComponent::gaussian(vec![0])], 1).unwrap();
        let sigma = DMatrix::identity(1, 1);
        let prev = vec![ParameterVector::new(vec![0.0])];
        let got =
            pmcabc_weight(0.0, &ParameterVector::new(vec![9.0]), &prev, &[1.0], &sigma, &kernel)
                .unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn weight_matches_direct_summation_oracle() {
        let mut rng = task_rng(41, &[]);
        let kernel = JointKernel::new(vec![KernelComponent::gaussian(vec![0, 1])], 2).unwrap();
        let mut sigma = DMatrix::identity(2, 2);
        sigma[(0, 1)] = 0.2;
        sigma[(1, 0)] = 0.2;
        for _ in 0..20 {
            let prev: Vec<ParameterVector> = (0..5)
                .map(|_| {
                    ParameterVector::new(vec![
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ])
                })
                .collect();
            let mut weights: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.0)).collect();
            normalize_weights(&mut weights).unwrap();
            let theta =
                ParameterVector::new(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let prior = 0.125;
            let got = pmcabc_weight(prior, &theta, &prev, &weights, &sigma, &kernel).unwrap();
            let mut denom = 0.0;
            for (p, w) in prev.iter().zip(&weights) {
                denom += w * kernel.density(&theta, p, &sigma).unwrap();
            }
            assert_relative_eq!(got, prior / denom, max_relative = 1e-12);
        }
    }

    #[test]
    fn walk_kernel_out_of_reach_is_an_error() {
        let kernel = JointKernel::new(vec![KernelComponent::discrete_walk(vec![0])], 1).unwrap();
        let sigma = DMatrix::identity(1, 1);
        let prev = vec![ParameterVector::new(vec![0.0])];
        let err = pmcabc_weight(
            1.0,
            &ParameterVector::new(vec![5.0]),
            &prev,
            &[1.0],
            &sigma,
            &kernel,
        )
        .unwrap_err();
        assert!(matches!(err, SamplerError::ZeroKernelDenominator));
    }

    #[test]
    fn resampling_follows_the_weights() {
        let mut rng = task_rng(42, &[]);
        let weights = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[resample_index(&weights, &mut rng)] += 1;
        }
        for (count, w) in counts.iter().zip(&weights) {
            let freq = *count as f64 / n as f64;
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((freq - w).abs() < 4.0 * se, "freq {freq} for weight {w}");
        }
    }

    #[test]
    fn normalization_rejects_zero_totals() {
        let mut weights = vec![0.0, 0.0];
        assert!(matches!(
            normalize_weights(&mut weights),
            Err(SamplerError::DegenerateWeights)
        ));
        let mut weights = vec![2.0, 6.0];
        normalize_weights(&mut weights).unwrap();
        assert_relative_eq!(weights.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
