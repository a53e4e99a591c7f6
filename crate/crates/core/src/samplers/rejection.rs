//! Rejection ABC: resimulate from the prior until the distance to the
//! observed data drops below the threshold, once per requested particle.

use serde::{Deserialize, Serialize};

use crate::executor::{map_collect, ExecutorSpec, TaskTrace};
use crate::graph::{DataSet, ModelGraph};
use crate::kernels::weighted_covariance;
use crate::seed::task_rng;
use crate::summaries::DatasetDistance;

use super::journal::{matrix_to_rows, GenerationRecord, Journal};
use super::{check_observed, config_echo, SamplerError, STREAM_SIM};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionConfig {
    pub n_samples: usize,
    pub epsilon: f64,
    pub max_attempts_per_particle: u64,
}

impl RejectionConfig {
    pub fn new(n_samples: usize, epsilon: f64) -> Self {
        Self {
            n_samples,
            epsilon,
            max_attempts_per_particle: super::pmcabc::DEFAULT_MAX_ATTEMPTS,
        }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if self.n_samples == 0 {
            return Err(SamplerError::InvalidConfig(
                "n_samples must be at least 1".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(SamplerError::InvalidConfig(
                "epsilon must be positive".into(),
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

pub(crate) struct AcceptedParticle {
    pub theta: Vec<f64>,
    pub distance: f64,
    pub attempts: u64,
}

/// One explicit-acceptance task: draw from the prior, simulate, accept when
/// the distance is within `epsilon`. Simulation failures consume an attempt
/// and retry with a fresh draw.
pub(crate) fn prior_acceptance_task(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: &DatasetDistance,
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
        let theta = match graph.sample_prior(&mut rng) {
            Ok(theta) => theta,
            Err(_) => continue,
        };
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

pub(crate) struct GenerationParts {
    pub particles: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub attempts: Vec<u64>,
    pub traces: Vec<TaskTrace>,
}

pub(crate) fn rejection_generation(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: &DatasetDistance,
    epsilon: f64,
    n_samples: usize,
    max_attempts: u64,
    executor: &ExecutorSpec,
    seed: u64,
    generation: u64,
) -> Result<GenerationParts, SamplerError> {
    let inputs = vec![(); n_samples];
    let mut result = map_collect(&inputs, executor, |i, _| {
        prior_acceptance_task(
            graph,
            observed,
            distance,
            epsilon,
            max_attempts,
            seed,
            generation,
            i,
        )
    });
    result.record_attempts(|p: &AcceptedParticle| p.attempts);
    let (accepted, traces) = result
        .into_payloads_and_traces()
        .map_err(|(_, err)| err)?;
    Ok(GenerationParts {
        particles: accepted.iter().map(|p| p.theta.clone()).collect(),
        distances: accepted.iter().map(|p| p.distance).collect(),
        attempts: accepted.iter().map(|p| p.attempts).collect(),
        traces,
    })
}

/// Draws `n_samples` particles whose simulated data lie within `epsilon` of
/// the observed data; every particle gets weight `1/N`.
pub fn rejection_abc(
    graph: &ModelGraph,
    observed: &DataSet,
    distance: &DatasetDistance,
    config: &RejectionConfig,
    executor: &ExecutorSpec,
    seed: u64,
) -> Result<Journal, SamplerError> {
    config.validate()?;
    check_observed(graph, observed, Some(distance))?;

    let parts = rejection_generation(
        graph,
        observed,
        distance,
        config.epsilon,
        config.n_samples,
        config.max_attempts_per_particle,
        executor,
        seed,
        1,
    )?;

    let weights = vec![1.0 / config.n_samples as f64; config.n_samples];
    let particle_vectors: Vec<_> = parts.particles.iter().cloned().map(Into::into).collect();
    let sigma = weighted_covariance(&particle_vectors, &weights)? * 2.0;

    let mut journal = Journal::new(config_echo("rejection", config), seed);
    journal.generations.push(GenerationRecord {
        epsilon: Some(config.epsilon),
        particles: parts.particles,
        weights,
        distances: Some(parts.distances),
        covariance: matrix_to_rows(&sigma),
        task_traces: parts.traces,
        attempts: parts.attempts,
    });
    Ok(journal)
}
