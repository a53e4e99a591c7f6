//! The journal: the persistent record of an inference run.
//!
//! Serializes to a JSON document with fixed field names
//! (`config`, `seed`, `generations: [{epsilon, particles, weights,
//! distances, covariance, task_traces, attempts}]`) so runs can be diffed
//! across machines and executor configurations.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::executor::TaskTrace;
use crate::graph::ParameterVector;
use crate::kernels::{weighted_covariance, weighted_mean, CovarianceMatrix};

use super::SamplerError;

/// One generation of accepted particles with their bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Acceptance threshold used this generation; absent for samplers with
    /// probabilistic weighting. Non-finite thresholds serialize as JSON
    /// null.
    pub epsilon: Option<f64>,
    /// Accepted parameters, one row per particle.
    pub particles: Vec<Vec<f64>>,
    /// Normalized importance weights.
    pub weights: Vec<f64>,
    /// Accepted distances (explicit-acceptance samplers only).
    pub distances: Option<Vec<f64>>,
    /// Kernel covariance for the next generation: twice the weighted
    /// covariance of this generation's particles.
    pub covariance: Vec<Vec<f64>>,
    /// Schedule traces of the simulation map phase.
    pub task_traces: Vec<TaskTrace>,
    /// Simulation attempts per particle.
    pub attempts: Vec<u64>,
}

impl GenerationRecord {
    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn particle_vectors(&self) -> Vec<ParameterVector> {
        self.particles
            .iter()
            .map(|p| ParameterVector::new(p.clone()))
            .collect()
    }

    pub fn covariance_matrix(&self) -> CovarianceMatrix {
        rows_to_matrix(&self.covariance)
    }
}

/// Record of a full inference run: configuration echo, master seed, and
/// per-generation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journal {
    pub config: Value,
    pub seed: u64,
    pub generations: Vec<GenerationRecord>,
}

impl Journal {
    pub(crate) fn new(config: Value, seed: u64) -> Self {
        Self {
            config,
            seed,
            generations: Vec::new(),
        }
    }

    pub fn n_generations(&self) -> usize {
        self.generations.len()
    }

    /// Generation `t`, one-based to match the sampler iteration count.
    pub fn generation(&self, t: usize) -> Result<&GenerationRecord, SamplerError> {
        if t == 0 || t > self.generations.len() {
            return Err(SamplerError::NoSuchGeneration(t));
        }
        Ok(&self.generations[t - 1])
    }

    pub fn last(&self) -> &GenerationRecord {
        self.generations.last().expect("journal has one generation")
    }

    /// Weighted posterior mean of generation `t`.
    pub fn posterior_mean(&self, t: usize) -> Result<ParameterVector, SamplerError> {
        let generation = self.generation(t)?;
        Ok(ParameterVector::new(weighted_mean(
            &generation.particle_vectors(),
            &generation.weights,
        )))
    }

    /// Weighted posterior covariance of generation `t` (unscaled).
    pub fn posterior_cov(&self, t: usize) -> Result<CovarianceMatrix, SamplerError> {
        let generation = self.generation(t)?;
        Ok(weighted_covariance(
            &generation.particle_vectors(),
            &generation.weights,
        )?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("journal serializes")
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(writer, self)
    }

    pub fn from_json_str(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn from_reader<R: Read>(reader: R) -> serde_json::Result<Self> {
        serde_json::from_reader(reader)
    }

    /// The journal with schedule traces stripped: everything left is
    /// required to be identical across executor modes and worker counts
    /// for a fixed configuration and seed.
    pub fn numeric_view(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("journal serializes");
        if let Some(generations) = value
            .get_mut("generations")
            .and_then(|g| g.as_array_mut())
        {
            for generation in generations {
                if let Some(fields) = generation.as_object_mut() {
                    fields.remove("task_traces");
                }
            }
        }
        value
    }
}

pub(crate) fn matrix_to_rows(matrix: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..matrix.nrows())
        .map(|i| (0..matrix.ncols()).map(|j| matrix[(i, j)]).collect())
        .collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}
