//! Stochastic 40-site Lorenz forecast model.
//!
//! Coupled cyclic dynamics with constant forcing, a linear closure term for
//! the unresolved fast variables, and an AR(1) stochastic forcing refreshed
//! once per time step. Integration uses classical fourth-order Runge-Kutta
//! with the forcing held fixed within each step.

use std::io::{self, Write};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{GraphBuilder, ModelGraph, Root, SimulationError, Simulator};

/// Number of slow variables around the cyclic lattice.
pub const N_SITES: usize = 40;

/// One state of the slow variables.
pub type State = [f64; N_SITES];

/// Model constants and discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    /// Closure coefficients: the constant and linear terms of
    /// `g(y) = theta1 + theta2 * y`.
    pub theta1: f64,
    pub theta2: f64,
    /// Constant forcing.
    pub forcing: f64,
    /// Autocorrelation of the stochastic forcing, in `[0, 1)`.
    pub phi: f64,
    /// Number of integration steps over `[0, t_end]`.
    pub t_steps: usize,
    /// End of the integration window in model time units.
    pub t_end: f64,
}

impl LorenzParams {
    /// Standard configuration: forcing 10, phi 0.4, 1024 steps over [0, 4]
    /// (twenty days of model time).
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self {
            theta1,
            theta2,
            forcing: 10.0,
            phi: 0.4,
            t_steps: 1024,
            t_end: 4.0,
        }
    }

    pub fn with_steps(mut self, t_steps: usize) -> Self {
        self.t_steps = t_steps;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.t_steps as f64
    }
}

/// Reference initial state: every site at the forcing value, with a small
/// kick at site 0 to break the symmetric fixed point.
pub fn default_initial_state(forcing: f64) -> State {
    let mut y = [forcing; N_SITES];
    y[0] += 0.01;
    y
}

/// Drift of the slow variables:
/// `-y[k-1] (y[k-2] - y[k+1]) - y[k] + F - (theta1 + theta2 y[k]) + eta[k]`
/// with all indices cyclic.
pub fn lorenz_drift(y: &State, params: &LorenzParams, eta: &State) -> State {
    let mut dy = [0.0; N_SITES];
    for k in 0..N_SITES {
        let km1 = (k + N_SITES - 1) % N_SITES;
        let km2 = (k + N_SITES - 2) % N_SITES;
        let kp1 = (k + 1) % N_SITES;
        let closure = params.theta1 + params.theta2 * y[k];
        dy[k] = -y[km1] * (y[km2] - y[kp1]) - y[k] + params.forcing - closure + eta[k];
    }
    dy
}

/// One classical Runge-Kutta step with the forcing frozen.
pub fn rk4_step(y: &State, params: &LorenzParams, eta: &State, dt: f64) -> State {
    let add = |a: &State, b: &State, scale: f64| -> State {
        let mut out = [0.0; N_SITES];
        for k in 0..N_SITES {
            out[k] = a[k] + scale * b[k];
        }
        out
    };
    let k1 = lorenz_drift(y, params, eta);
    let k2 = lorenz_drift(&add(y, &k1, dt / 2.0), params, eta);
    let k3 = lorenz_drift(&add(y, &k2, dt / 2.0), params, eta);
    let k4 = lorenz_drift(&add(y, &k3, dt), params, eta);
    let mut out = *y;
    for k in 0..N_SITES {
        out[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    out
}

fn standard_normal_state(rng: &mut ChaCha8Rng) -> State {
    let mut e = [0.0; N_SITES];
    for v in e.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    e
}

/// Initial forcing `eta(0) = sqrt(1 - phi^2) e(0)`.
pub fn init_forcing(phi: f64, rng: &mut ChaCha8Rng) -> State {
    apply_innovation(&[0.0; N_SITES], phi, &standard_normal_state(rng))
}

/// AR(1) forcing refresh `eta <- phi eta + sqrt(1 - phi^2) e` with a fresh
/// standard-normal innovation.
pub fn update_forcing(eta: &State, phi: f64, rng: &mut ChaCha8Rng) -> State {
    apply_innovation(eta, phi, &standard_normal_state(rng))
}

fn apply_innovation(eta: &State, phi: f64, e: &State) -> State {
    let scale = (1.0 - phi * phi).sqrt();
    let mut out = [0.0; N_SITES];
    for k in 0..N_SITES {
        out[k] = phi * eta[k] + scale * e[k];
    }
    out
}

/// A simulated trajectory including the initial state: `t_steps + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
}

impl Trajectory {
    /// Row-major flattening (one row per time step, 40 columns), the layout
    /// the Hakkarainen statistics and the CSV export use.
    pub fn flatten(&self) -> Vec<f64> {
        self.states.iter().flatten().copied().collect()
    }

    /// CSV with one row per time step and 40 unlabeled columns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for state in &self.states {
            let mut first = true;
            for v in state {
                if !first {
                    write!(out, ",")?;
                }
                write!(out, "{v}")?;
                first = false;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrates the model with innovations supplied by `innovations(step)`;
/// step 0 seeds the initial forcing, later steps feed the AR(1) refresh.
pub fn simulate_lorenz_with_innovations(
    params: &LorenzParams,
    y0: &State,
    mut innovations: impl FnMut(usize) -> State,
) -> Result<Trajectory, SimulationError> {
    let dt = params.dt();
    let mut states = Vec::with_capacity(params.t_steps + 1);
    states.push(*y0);
    let mut y = *y0;
    let mut eta = apply_innovation(&[0.0; N_SITES], params.phi, &innovations(0));
    for step in 0..params.t_steps {
        if step > 0 {
            eta = apply_innovation(&eta, params.phi, &innovations(step));
        }
        y = rk4_step(&y, params, &eta, dt);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimulationError::Simulator(format!(
                "lorenz trajectory diverged at step {step}"
            )));
        }
        states.push(y);
    }
    Ok(Trajectory { states })
}

/// Integrates the model with generator-driven innovations; deterministic
/// given the generator state.
pub fn simulate_lorenz(
    params: &LorenzParams,
    y0: &State,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, SimulationError> {
    simulate_lorenz_with_innovations(params, y0, |_| standard_normal_state(rng))
}

/// Graph-facing simulator: inputs are the two closure coefficients, output
/// is the flattened trajectory.
#[derive(Debug, Clone)]
pub struct LorenzSimulator {
    pub forcing: f64,
    pub phi: f64,
    pub t_steps: usize,
    pub t_end: f64,
    pub y0: State,
}

impl LorenzSimulator {
    pub fn new(t_steps: usize, phi: f64) -> Self {
        Self {
            forcing: 10.0,
            phi,
            t_steps,
            t_end: 4.0,
            y0: default_initial_state(10.0),
        }
    }

    fn params(&self, theta1: f64, theta2: f64) -> LorenzParams {
        LorenzParams {
            theta1,
            theta2,
            forcing: self.forcing,
            phi: self.phi,
            t_steps: self.t_steps,
            t_end: self.t_end,
        }
    }
}

impl Simulator for LorenzSimulator {
    fn name(&self) -> &str {
        "lorenz95"
    }

    fn output_len(&self) -> usize {
        (self.t_steps + 1) * N_SITES
    }

    fn simulate(&self, inputs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimulationError> {
        if inputs.len() != 2 {
            return Err(SimulationError::Simulator(format!(
                "lorenz95 expects 2 inputs, got {}",
                inputs.len()
            )));
        }
        let params = self.params(inputs[0], inputs[1]);
        Ok(simulate_lorenz(&params, &self.y0, rng)?.flatten())
    }
}

/// The benchmark inference graph: `theta1 ~ Uniform(0.5, 3.5)`,
/// `theta2 ~ Uniform(0, 0.3)`, observed through a Lorenz simulation.
pub fn lorenz_graph(t_steps: usize, phi: f64) -> ModelGraph {
    let mut b = GraphBuilder::new();
    let theta1 = b.uniform("theta1", 0.5, 3.5);
    let theta2 = b.uniform("theta2", 0.0, 0.3);
    let sim = b.simulator(
        "lorenz",
        vec![theta1, theta2],
        Arc::new(LorenzSimulator::new(t_steps, phi)),
    );
    b.build(vec![Root::new(sim)])
        .expect("lorenz graph is valid")
}

/// The reference parameter value used to generate observed datasets.
pub const TRUE_THETA: [f64; 2] = [2.0, 0.1];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn params(theta1: f64, theta2: f64) -> LorenzParams {
        LorenzParams::new(theta1, theta2)
    }

    #[test]
    fn drift_at_rest_is_forcing_minus_constant_closure() {
        let p = params(2.0, 0.1);
        let dy = lorenz_drift(&[0.0; N_SITES], &p, &[0.0; N_SITES]);
        for v in dy {
            assert_relative_eq!(v, p.forcing - p.theta1);
        }
    }

    #[test]
    fn drift_of_constant_state_without_closure() {
        let c = 3.25;
        let p = params(0.0, 0.0);
        let dy = lorenz_drift(&[c; N_SITES], &p, &[0.0; N_SITES]);
        for v in dy {
            assert_relative_eq!(v, p.forcing - c);
        }
    }

    #[test]
    fn drift_matches_literal_index_oracle() {
        let p = params(1.7, 0.23);
        let mut rng = task_rng(30, &[]);
        for _ in 0..100 {
            let mut y = [0.0; N_SITES];
            let mut eta = [0.0; N_SITES];
            for k in 0..N_SITES {
                y[k] = rng.random_range(-8.0..12.0);
                eta[k] = rng.random_range(-2.0..2.0);
            }
            let dy = lorenz_drift(&y, &p, &eta);
            for k in 0..N_SITES {
                // Literal transcription with explicit modulo arithmetic.
                let idx = |offset: i64| -> usize {
                    ((k as i64 + offset).rem_euclid(N_SITES as i64)) as usize
                };
                let expected = -y[idx(-1)] * (y[idx(-2)] - y[idx(1)]) - y[k] + p.forcing
                    - (p.theta1 + p.theta2 * y[k])
                    + eta[k];
                assert_relative_eq!(dy[k], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rk4_preserves_a_constructed_fixed_point() {
        // At a uniform state c with zero closure the coupling vanishes, so
        // eta = c - F makes the drift exactly zero.
        let c = 4.0;
        let p = params(0.0, 0.0);
        let eta = [c - p.forcing; N_SITES];
        let y = [c; N_SITES];
        let next = rk4_step(&y, &p, &eta, 0.1);
        for k in 0..N_SITES {
            assert_relative_eq!(next[k], c, epsilon = 1e-13);
        }
    }

    #[test]
    fn rk4_matches_exponential_decay_to_fifth_order() {
        // theta1 = F and theta2 = 0 reduce a uniform state to dy/dt = -y.
        let p = params(10.0, 0.0);
        let eta = [0.0; N_SITES];
        let y = [1.0; N_SITES];
        for dt in [0.1, 0.05, 0.025] {
            let next = rk4_step(&y, &p, &eta, dt);
            let expected = (-dt).exp();
            let err = (next[0] - expected).abs();
            assert!(err < dt.powi(5), "dt {dt}: error {err}");
        }
    }

    #[test]
    fn rk4_one_step_error_contracts_sixteen_fold_when_halving_dt() {
        // Global error over a fixed horizon of the frozen-noise problem,
        // against a fine-step reference.
        let p = params(2.0, 0.1);
        let mut rng = task_rng(31, &[]);
        let mut y0 = [0.0; N_SITES];
        for v in y0.iter_mut() {
            *v = rng.random_range(2.0..6.0);
        }
        let eta = [0.0; N_SITES];
        let horizon = 0.5;
        let solve = |steps: usize| -> State {
            let dt = horizon / steps as f64;
            let mut y = y0;
            for _ in 0..steps {
                y = rk4_step(&y, &p, &eta, dt);
            }
            y
        };
        let reference = solve(4096);
        let err = |y: &State| -> f64 {
            y.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let coarse = err(&solve(16));
        let fine = err(&solve(32));
        let order = (coarse / fine).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn white_noise_limit_returns_the_innovation() {
        let mut rng_a = task_rng(32, &[]);
        let mut rng_b = task_rng(32, &[]);
        let eta = update_forcing(&[5.0; N_SITES], 0.0, &mut rng_a);
        let e = standard_normal_state(&mut rng_b);
        assert_eq!(eta, e);
    }

    #[test]
    fn persistence_limit_keeps_eta() {
        let eta = [1.5; N_SITES];
        let phi = 1.0 - 1e-12;
        let out = apply_innovation(&eta, phi, &[0.0; N_SITES]);
        for v in out {
            assert_relative_eq!(v, 1.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn forcing_is_stationary_with_unit_variance() {
        let phi = 0.4;
        let mut rng = task_rng(33, &[]);
        let mut eta = init_forcing(phi, &mut rng);
        let updates = 100_000;
        // Subsample every 10th update; at phi = 0.4 the residual
        // autocorrelation is about 1e-4, so samples are effectively
        // independent across time and across sites.
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for step in 0..updates {
            eta = update_forcing(&eta, phi, &mut rng);
            if step % 10 == 0 {
                for v in eta {
                    sum += v;
                    sum_sq += v * v;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        // Var of a variance estimate of N(0,1) is about 2/n.
        let se = (2.0 / count as f64).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "variance {var}, se {se}");
    }

    #[test]
    fn trajectories_are_reproducible() {
        let p = params(2.0, 0.1).with_steps(64);
        let y0 = default_initial_state(p.forcing);
        let a = simulate_lorenz(&p, &y0, &mut task_rng(34, &[])).unwrap();
        let b = simulate_lorenz(&p, &y0, &mut task_rng(34, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 65);
    }

    #[test]
    fn rotating_the_lattice_rotates_the_trajectory() {
        let p = params(2.0, 0.1).with_steps(256);
        let mut rng = task_rng(35, &[]);
        let mut y0 = [0.0; N_SITES];
        for v in y0.iter_mut() {
            *v = rng.random_range(5.0..15.0);
        }
        let innovations: Vec<State> = (0..p.t_steps)
            .map(|_| standard_normal_state(&mut rng))
            .collect();

        let rotate = |s: &State| -> State {
            let mut out = [0.0; N_SITES];
            for k in 0..N_SITES {
                out[(k + 1) % N_SITES] = s[k];
            }
            out
        };

        let base = simulate_lorenz_with_innovations(&p, &y0, |i| innovations[i]).unwrap();
        let rotated =
            simulate_lorenz_with_innovations(&p, &rotate(&y0), |i| rotate(&innovations[i]))
                .unwrap();
        for (a, b) in base.states.iter().zip(&rotated.states) {
            let expected = rotate(a);
            assert_eq!(&expected, b);
        }
    }

    #[test]
    fn simulator_feeds_hakkarainen_statistics() {
        use crate::summaries::{HakkarainenLorenz, Statistics};
        let sim = LorenzSimulator::new(128, 0.4);
        let mut rng = task_rng(36, &[]);
        let out = sim.simulate(&TRUE_THETA, &mut rng).unwrap();
        assert_eq!(out.len(), 129 * N_SITES);
        let stats = HakkarainenLorenz.summary(&out).unwrap();
        assert_eq!(stats.len(), 6);
        assert!(stats.iter().all(|v| v.is_finite()));
        // Self-distance of a trajectory is zero.
        assert_eq!(
            crate::summaries::euclidean_distance(&stats, &stats).unwrap(),
            0.0
        );
    }

    #[test]
    fn lorenz_graph_has_the_benchmark_priors() {
        let g = lorenz_graph(128, 0.4);
        assert_eq!(g.dim(), 2);
        assert!(g.prior_density(&vec![2.0, 0.1].into()).unwrap() > 0.0);
        assert_eq!(g.prior_density(&vec![0.4, 0.1].into()).unwrap(), 0.0);
        assert_eq!(g.prior_density(&vec![2.0, 0.31].into()).unwrap(), 0.0);
    }
}
