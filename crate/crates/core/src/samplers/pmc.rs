//! Population Monte Carlo with an approximate likelihood.
//!
//! No acceptance loop: every particle runs exactly `n_sim_per_theta`
//! forward simulations, fits the approximate likelihood at the observed
//! summary, and is kept with a probabilistic weight. Proposals outside the
//! prior support (and particles whose simulations fail) stay in the
//! population with weight zero.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::executor::{map_collect, ExecutorSpec};
use crate::graph::{DataSet, ModelGraph, ParameterVector};
use crate::kernels::{weighted_covariance, JointKernel, PreparedKernel};
use crate::seed::task_rng;
use crate::summaries::{dataset_summary, ApproxLikelihood, Statistics, SummaryVector};

use super::journal::{matrix_to_rows, GenerationRecord, Journal};
use super::{
    check_observed, config_echo, kernel_mixture_density, normalize_weights, resample_index,
    SamplerError, STREAM_SIM,
};

const PRIOR_DRAW_RETRIES: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmcConfig {
    pub n_samples: usize,
    pub generations: usize,
    /// Simulations per parameter feeding the approximate likelihood fit.
    pub n_sim_per_theta: usize,
}

impl PmcConfig {
    pub fn new(n_samples: usize, generations: usize, n_sim_per_theta: usize) -> Self {
        Self {
            n_samples,
            generations,
            n_sim_per_theta,
        }
    }

    fn validate(&self, stat_dim: usize) -> Result<(), SamplerError> {
        if self.n_samples < 2 {
            return Err(SamplerError::InvalidConfig(
                "n_samples must be at least 2".into(),
            ));
        }
        if self.generations == 0 {
            return Err(SamplerError::InvalidConfig(
                "generations must be at least 1".into(),
            ));
        }
        if self.n_sim_per_theta < stat_dim + 2 {
            return Err(SamplerError::InvalidConfig(format!(
                "n_sim_per_theta must be at least statistics dimension + 2 = {}",
                stat_dim + 2
            )));
        }
        Ok(())
    }
}

struct PmcParticle {
    theta: Vec<f64>,
    raw_weight: f64,
    attempts: u64,
}

/// Likelihood of `theta` from `n_sim` fresh simulations. Failed simulations
/// yield likelihood zero; the simulation budget counts as spent either way.
fn estimate_likelihood(
    graph: &ModelGraph,
    theta: &ParameterVector,
    n_sim: usize,
    statistics: &Arc<dyn Statistics>,
    approx: &Arc<dyn ApproxLikelihood>,
    observed_summary: &SummaryVector,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64, SamplerError> {
    let datasets = match graph.forward_simulate(theta, n_sim, rng) {
        Ok(datasets) => datasets,
        Err(_) => return Ok(0.0),
    };
    let rows = datasets
        .iter()
        .map(|ds| dataset_summary(statistics, ds))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(approx.evaluate(observed_summary, &rows)?)
}

fn prior_task(
    graph: &ModelGraph,
    n_sim: usize,
    statistics: &Arc<dyn Statistics>,
    approx: &Arc<dyn ApproxLikelihood>,
    observed_summary: &SummaryVector,
    seed: u64,
    particle: usize,
) -> Result<PmcParticle, SamplerError> {
    let mut rng = task_rng(seed, &[STREAM_SIM, 1, particle as u64]);
    let mut draws = 0u64;
    let theta = loop {
        match graph.sample_prior(&mut rng) {
            Ok(theta) => break theta,
            Err(source) => {
                draws += 1;
                if draws >= PRIOR_DRAW_RETRIES {
                    return Err(SamplerError::PriorSampling { particle, source });
                }
            }
        }
    };
    let prior = graph.prior_density(&theta)?;
    let likelihood = estimate_likelihood(
        graph,
        &theta,
        n_sim,
        statistics,
        approx,
        observed_summary,
        &mut rng,
    )?;
    Ok(PmcParticle {
        theta: theta.values,
        raw_weight: prior * likelihood,
        attempts: n_sim as u64,
    })
}

#[allow(clippy::too_many_arguments)]
fn perturbation_task(
    graph: &ModelGraph,
    kernel: &PreparedKernel<'_>,
    prev_particles: &[ParameterVector],
    prev_weights: &[f64],
    n_sim: usize,
    statistics: &Arc<dyn Statistics>,
    approx: &Arc<dyn ApproxLikelihood>,
    observed_summary: &SummaryVector,
    seed: u64,
    generation: u64,
    particle: usize,
) -> Result<PmcParticle, SamplerError> {
    let mut rng = task_rng(seed, &[STREAM_SIM, generation, particle as u64]);
    let center = &prev_particles[resample_index(prev_weights, &mut rng)];
    let theta = kernel.sample(center, &mut rng);
    let prior = graph.prior_density(&theta)?;
    // The simulation budget is spent even for zero-prior proposals: the
    // probabilistic-acceptance family has constant per-particle cost.
    let likelihood = estimate_likelihood(
        graph,
        &theta,
        n_sim,
        statistics,
        approx,
        observed_summary,
        &mut rng,
    )?;
    let numerator = prior * likelihood;
    let raw_weight = if numerator == 0.0 {
        0.0
    } else {
        let denominator = kernel_mixture_density(&theta, prev_particles, prev_weights, kernel);
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(SamplerError::ZeroKernelDenominator);
        }
        numerator / denominator
    };
    Ok(PmcParticle {
        theta: theta.values,
        raw_weight,
        attempts: n_sim as u64,
    })
}

fn push_generation(
    journal: &mut Journal,
    particles: Vec<PmcParticle>,
    traces: Vec<crate::executor::TaskTrace>,
) -> Result<(), SamplerError> {
    let mut weights: Vec<f64> = particles.iter().map(|p| p.raw_weight).collect();
    normalize_weights(&mut weights)?;
    let vectors: Vec<ParameterVector> =
        particles.iter().map(|p| p.theta.clone().into()).collect();
    let sigma = weighted_covariance(&vectors, &weights)? * 2.0;
    journal.generations.push(GenerationRecord {
        epsilon: None,
        particles: particles.iter().map(|p| p.theta.clone()).collect(),
        weights,
        distances: None,
        covariance: matrix_to_rows(&sigma),
        task_traces: traces,
        attempts: particles.iter().map(|p| p.attempts).collect(),
    });
    Ok(())
}

/// Runs population Monte Carlo with the given approximate likelihood and
/// returns its journal.
pub fn pmc(
    graph: &ModelGraph,
    observed: &DataSet,
    statistics: &Arc<dyn Statistics>,
    approx: &Arc<dyn ApproxLikelihood>,
    kernel: &JointKernel,
    config: &PmcConfig,
    executor: &ExecutorSpec,
    seed: u64,
) -> Result<Journal, SamplerError> {
    check_observed(graph, observed, None)?;
    let observed_summary = dataset_summary(statistics, observed)?;
    config.validate(observed_summary.len())?;
    if kernel.dim() != graph.dim() {
        return Err(SamplerError::InvalidConfig(format!(
            "kernel covers {} parameters but the graph has {}",
            kernel.dim(),
            graph.dim()
        )));
    }

    let n = config.n_samples;
    let mut journal = Journal::new(config_echo("pmc", config), seed);

    let inputs = vec![(); n];
    let mut result = map_collect(&inputs, executor, |i, _| {
        prior_task(
            graph,
            config.n_sim_per_theta,
            statistics,
            approx,
            &observed_summary,
            seed,
            i,
        )
    });
    result.record_attempts(|p: &PmcParticle| p.attempts);
    let (particles, traces) = result.into_payloads_and_traces().map_err(|(_, e)| e)?;
    push_generation(&mut journal, particles, traces)?;

    for t in 2..=config.generations {
        let prev = journal.generations.last().expect("previous generation");
        let prev_particles = prev.particle_vectors();
        let prev_weights = prev.weights.clone();
        let sigma = prev.covariance_matrix();
        let prepared = kernel.prepare(&sigma)?;

        let mut result = map_collect(&inputs, executor, |i, _| {
            perturbation_task(
                graph,
                &prepared,
                &prev_particles,
                &prev_weights,
                config.n_sim_per_theta,
                statistics,
                approx,
                &observed_summary,
                seed,
                t as u64,
                i,
            )
        });
        result.record_attempts(|p: &PmcParticle| p.attempts);
        let (particles, traces) = result.into_payloads_and_traces().map_err(|(_, e)| e)?;
        push_generation(&mut journal, particles, traces)?;
    }

    Ok(journal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::summaries::{Identity, SyntheticLikelihood};

    fn toy() -> (ModelGraph, DataSet, Arc<dyn Statistics>, Arc<dyn ApproxLikelihood>) {
        let graph = models::normal_mean(0.0, 1.0, 1.0, 1);
        let observed = DataSet::from_single(vec![1.0]);
        (graph, observed, Arc::new(Identity), Arc::new(SyntheticLikelihood))
    }

    #[test]
    fn constant_simulation_budget_per_particle() {
        let (graph, observed, stats, approx) = toy();
        let kernel = JointKernel::default_for(&graph);
        let config = PmcConfig::new(12, 2, 25);
        let journal = pmc(
            &graph,
            &observed,
            &stats,
            &approx,
            &kernel,
            &config,
            &ExecutorSpec::Sequential,
            31,
        )
        .unwrap();
        for t in 1..=2 {
            let generation = journal.generation(t).unwrap();
            assert!(generation.attempts.iter().all(|&a| a == 25));
            assert!(generation
                .task_traces
                .iter()
                .all(|trace| trace.attempts == 25));
            assert!(generation.epsilon.is_none());
            assert!(generation.distances.is_none());
        }
    }

    #[test]
    fn flat_prior_and_constant_likelihood_give_uniform_weights() {
        // Uniform prior; likelihood constant because the root ignores the
        // parameter (root is the parameter plus zero noise? -- instead use
        // a wide-variance check through equal raw weights).
        struct ConstantLikelihood;
        impl ApproxLikelihood for ConstantLikelihood {
            fn name(&self) -> &str {
                "constant"
            }
            fn evaluate(
                &self,
                _observed: &[f64],
                _simulated: &[Vec<f64>],
            ) -> Result<f64, crate::summaries::SummaryError> {
                Ok(0.75)
            }
        }
        let mut b = crate::graph::GraphBuilder::new();
        let mu = b.uniform("mu", 0.0, 1.0);
        let sd = b.hyperparameter(1.0);
        let obs = b.normal("obs", mu, sd);
        let graph = b
            .build(vec![crate::graph::Root::new(obs)])
            .unwrap();
        let observed = DataSet::from_single(vec![0.5]);
        let stats: Arc<dyn Statistics> = Arc::new(Identity);
        let approx: Arc<dyn ApproxLikelihood> = Arc::new(ConstantLikelihood);
        let kernel = JointKernel::default_for(&graph);
        let config = PmcConfig::new(8, 1, 4);
        let journal = pmc(
            &graph,
            &observed,
            &stats,
            &approx,
            &kernel,
            &config,
            &ExecutorSpec::Sequential,
            32,
        )
        .unwrap();
        let weights = &journal.generation(1).unwrap().weights;
        let first = weights[0];
        assert!(weights.iter().all(|&w| w == first));
        assert!((first - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn n_sim_must_cover_statistics_dimension() {
        let (graph, observed, stats, approx) = toy();
        let kernel = JointKernel::default_for(&graph);
        let config = PmcConfig::new(8, 1, 2);
        assert!(matches!(
            pmc(
                &graph,
                &observed,
                &stats,
                &approx,
                &kernel,
                &config,
                &ExecutorSpec::Sequential,
                0,
            ),
            Err(SamplerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn weights_are_normalized_each_generation() {
        let (graph, observed, stats, approx) = toy();
        let kernel = JointKernel::default_for(&graph);
        let config = PmcConfig::new(16, 3, 20);
        let journal = pmc(
            &graph,
            &observed,
            &stats,
            &approx,
            &kernel,
            &config,
            &ExecutorSpec::Sequential,
            33,
        )
        .unwrap();
        assert_eq!(journal.n_generations(), 3);
        for t in 1..=3 {
            let sum: f64 = journal.generation(t).unwrap().weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "generation {t} sums to {sum}");
        }
    }
}
