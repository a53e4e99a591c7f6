//! Population Monte Carlo ABC.
//!
//! Generation 1 is plain rejection ABC at the first scheduled threshold.
//! Every later generation adapts its threshold to the quantile of the
//! previous accepted distances (floored by the schedule), resamples
//! particles by weight, perturbs them through the kernel, and re-enters an
//! explicit acceptance loop; accepted particles are reweighted by prior
//! over kernel mixture and the kernel covariance is refreshed to twice the
//! weighted particle covariance.
//!
//! Two map phases run per generation: the acceptance loop and the
//! (quadratic-cost) weight computation. The journal's schedule traces cover
//! the acceptance phase, where the simulation work and its imbalance live.

use serde::{Deserialize, Serialize};

use crate::executor::{map_collect, ExecutorSpec};
use crate::graph::{DataSet, ModelGraph, ParameterVector};
use crate::kernels::{weighted_covariance, JointKernel, PreparedKernel};
use crate::seed::task_rng;
use crate::summaries::DatasetDistance;

use super::journal::{matrix_to_rows, GenerationRecord, Journal};
use super::rejection::{rejection_generation, AcceptedParticle};
use super::{
    adapt_epsilon, check_observed, config_echo, normalize_weights, pmcabc_weight_prepared,
    resample_index, SamplerError, STREAM_SIM,
};

/// Guard against non-terminating acceptance loops at too-small thresholds.
pub(crate) const DEFAULT_MAX_ATTEMPTS: u64 = 100_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmcabcConfig {
    pub n_samples: usize,
    /// Nonincreasing thresholds, one per generation; generation `t >= 2`
    /// uses `max(quantile of previous distances, epsilon_schedule[t-1])`.
    pub epsilon_schedule: Vec<f64>,
    /// Quantile level in (0, 1] for the adaptive threshold.
    pub epsilon_percentile: f64,
    pub max_attempts_per_particle: u64,
}

impl PmcabcConfig {
    pub fn new(n_samples: usize, epsilon_schedule: Vec<f64>) -> Self {
        Self {
            n_samples,
            epsilon_schedule,
            epsilon_percentile: 0.1,
            max_attempts_per_particle: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn generations(&self) -> usize {
        self.epsilon_schedule.len()
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if self.n_samples < 2 {
            return Err(SamplerError::InvalidConfig(
                "n_samples must be at least 2".into(),
            ));
        }
        if self.epsilon_schedule.is_empty() {
            return Err(SamplerError::InvalidConfig(
                "epsilon_schedule needs at least one generation".into(),
            ));
        }
        if !(self.epsilon_schedule[0] > 0.0) {
            return Err(SamplerError::InvalidConfig(
                "epsilon_schedule values must be positive".into(),
            ));
        }
        if self
            .epsilon_schedule
            .windows(2)
            .any(|pair| pair[1] > pair[0])
        {
            return Err(SamplerError::InvalidConfig(
                "epsilon_schedule must be nonincreasing".into(),
            ));
        }
        if !(self.epsilon_percentile > 0.0 && self.epsilon_percentile <= 1.0) {
            return Err(SamplerError::InvalidConfig(
                "epsilon_percentile must lie in (0, 1]".into(),
            ));
        }
        if self.max_attempts_per_particle == 0 {
            return Err(SamplerError::InvalidConfig(
                "max_attempts_per_particle must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One perturbation-acceptance task of generation `t >= 2`: resample a
/// center by weight, perturb, and keep resimulating until the distance
/// falls within the threshold. Proposals outside the prior support and
/// failed simulations consume attempts and retry.
#[allow(clippy::too_many_arguments)]
fn perturbation_acceptance_task(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: &DatasetDistance,
    kernel: &PreparedKernel<'_>,
    prev_particles: &[ParameterVector],
    prev_weights: &[f64],
    epsilon: f64,
    max_attempts: u64,
    seed: u64,
    generation: u64,
    particle: usize,
) -> Result<AcceptedParticle, SamplerError> {
    let mut rng = task_rng(seed, &[STREAM_SIM, generation, particle as u64]);
    let mut attempts = 0u64;
    let mut best_distance = f64::INFINITY;
    loop {
        if attempts >= max_attempts {
            return Err(SamplerError::MaxAttemptsExceeded {
                particle,
                max_attempts,
                best_distance,
            });
        }
        attempts += 1;
        let center = &prev_particles[resample_index(prev_weights, &mut rng)];
        let theta = kernel.sample(center, &mut rng);
        if graph.prior_density(&theta)? == 0.0 {
            continue;
        }
        let simulated = match graph.forward_simulate(&theta, 1, &mut rng) {
            Ok(datasets) => datasets,
            Err(_) => continue,
        };
        let d = distance.evaluate(observed, &simulated[0])?;
        best_distance = best_distance.min(d);
        if d <= epsilon {
            return Ok(AcceptedParticle {
                theta: theta.values,
                distance: d,
                attempts,
            });
        }
    }
}

/// Runs the full population Monte Carlo ABC scheme and returns its journal.
pub fn pmcabc(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: &DatasetDistance,
    kernel: &JointKernel,
    config: &PmcabcConfig,
    executor: &ExecutorSpec,
    seed: u64,
) -> Result<Journal, SamplerError> {
    config.validate()?;
    check_observed(graph, observed, Some(distance))?;
    if kernel.dim() != graph.dim() {
        return Err(SamplerError::InvalidConfig(format!(
            "kernel covers {} parameters but the graph has {}",
            kernel.dim(),
            graph.dim()
        )));
    }

    let n = config.n_samples;
    let mut journal = Journal::new(config_echo("pmcabc", config), seed);

    // Generation 1: rejection at the first scheduled threshold, uniform
    // weights.
    let parts = rejection_generation(
        graph,
        observed,
        distance,
        config.epsilon_schedule[0],
        n,
        config.max_attempts_per_particle,
        executor,
        seed,
        1,
    )?;
    let weights = vec![1.0 / n as f64; n];
    let particle_vectors: Vec<ParameterVector> =
        parts.particles.iter().cloned().map(Into::into).collect();
    let sigma = weighted_covariance(&particle_vectors, &weights)? * 2.0;
    journal.generations.push(GenerationRecord {
        epsilon: Some(config.epsilon_schedule[0]),
        particles: parts.particles,
        weights,
        distances: Some(parts.distances),
        covariance: matrix_to_rows(&sigma),
        task_traces: parts.traces,
        attempts: parts.attempts,
    });

    for t in 2..=config.generations() {
        let prev = journal.generations.last().expect("previous generation");
        let prev_particles = prev.particle_vectors();
        let prev_weights = prev.weights.clone();
        let prev_distances = prev.distances.clone().expect("explicit-acceptance record");
        let sigma = prev.covariance_matrix();
        let prepared = kernel.prepare(&sigma)?;

        let epsilon = adapt_epsilon(
            &prev_distances,
            config.epsilon_percentile,
            config.epsilon_schedule[t - 1],
        );

        // Acceptance map.
        let inputs = vec![(); n];
        let mut result = map_collect(&inputs, executor, |i, _| {
            perturbation_acceptance_task(
                graph,
                observed,
                distance,
                &prepared,
                &prev_particles,
                &prev_weights,
                epsilon,
                config.max_attempts_per_particle,
                seed,
                t as u64,
                i,
            )
        });
        result.record_attempts(|p: &AcceptedParticle| p.attempts);
        let (accepted, traces) = result.into_payloads_and_traces().map_err(|(_, e)| e)?;

        let particles: Vec<ParameterVector> =
            accepted.iter().map(|p| p.theta.clone().into()).collect();

        // Weight map: quadratic in the particle count, hence dispatched to
        // the executor as well.
        let weight_result = map_collect(&particles, executor, |_, theta| {
            let prior = graph.prior_density(theta)?;
            pmcabc_weight_prepared(prior, theta, &prev_particles, &prev_weights, &prepared)
        });
        let (mut weights, _) = weight_result
            .into_payloads_and_traces()
            .map_err(|(_, e)| e)?;
        normalize_weights(&mut weights)?;

        let sigma_next = weighted_covariance(&particles, &weights)? * 2.0;
        journal.generations.push(GenerationRecord {
            epsilon: Some(epsilon),
            particles: accepted.iter().map(|p| p.theta.clone()).collect(),
            weights,
            distances: Some(accepted.iter().map(|p| p.distance).collect()),
            covariance: matrix_to_rows(&sigma_next),
            task_traces: traces,
            attempts: accepted.iter().map(|p| p.attempts).collect(),
        });
    }

    Ok(journal)
}
