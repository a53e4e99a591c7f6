//! Pure scheduling simulator for makespan studies.
//!
//! Replays the executor's two allocation policies over a list of task
//! durations without running anything: a deterministic discrete-event
//! simulation where ties in worker-idle events break toward the lowest
//! worker id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::static_assign;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("instance needs at least one task")]
    Empty,
    #[error("instance needs at least one worker")]
    NoWorkers,
    #[error("task {0} has a non-positive or non-finite duration")]
    BadDuration(usize),
}

/// A scheduling problem: per-task durations and a worker count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleInstance {
    pub durations: Vec<f64>,
    pub n_workers: usize,
}

impl ScheduleInstance {
    pub fn new(durations: Vec<f64>, n_workers: usize) -> Result<Self, ScheduleError> {
        if durations.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if n_workers == 0 {
            return Err(ScheduleError::NoWorkers);
        }
        if let Some(bad) = durations.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(ScheduleError::BadDuration(bad));
        }
        Ok(Self {
            durations,
            n_workers,
        })
    }
}

/// Allocation policy under simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePolicy {
    Static,
    DynamicGreedy,
}

/// Result of a simulated schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    /// Completion time of the slowest worker.
    pub makespan: f64,
    /// Total busy time per worker.
    pub busy: Vec<f64>,
    /// Number of tasks per worker.
    pub task_counts: Vec<usize>,
    /// Worker assigned to each task.
    pub assignment: Vec<usize>,
    /// Start time of each task.
    pub start_times: Vec<f64>,
}

/// Deterministic discrete-event simulation of one policy over an instance.
pub fn simulate_schedule(instance: &ScheduleInstance, policy: SchedulePolicy) -> ScheduleOutcome {
    let m = instance.durations.len();
    let n = instance.n_workers;
    let mut busy = vec![0.0f64; n];
    let mut task_counts = vec![0usize; n];
    let mut assignment = vec![0usize; m];
    let mut start_times = vec![0.0f64; m];

    match policy {
        SchedulePolicy::Static => {
            for (worker, range) in static_assign(m, n).into_iter().enumerate() {
                let mut clock = 0.0;
                for task in range {
                    assignment[task] = worker;
                    start_times[task] = clock;
                    clock += instance.durations[task];
                    task_counts[worker] += 1;
                }
                busy[worker] = clock;
            }
        }
        SchedulePolicy::DynamicGreedy => {
            // Each task goes to the worker that falls idle first; at equal
            // idle times the lowest id wins.
            let mut free = vec![0.0f64; n];
            for task in 0..m {
                let worker = free
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite clocks"))
                    .map(|(w, _)| w)
                    .expect("at least one worker");
                assignment[task] = worker;
                start_times[task] = free[worker];
                free[worker] += instance.durations[task];
                busy[worker] += instance.durations[task];
                task_counts[worker] += 1;
            }
        }
    }

    let makespan = busy.iter().fold(0.0f64, |acc, b| acc.max(*b));
    ScheduleOutcome {
        makespan,
        busy,
        task_counts,
        assignment,
        start_times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn instance(durations: &[f64], workers: usize) -> ScheduleInstance {
        ScheduleInstance::new(durations.to_vec(), workers).unwrap()
    }

    #[test]
    fn four_equal_tasks_on_two_workers_take_two_rounds() {
        let inst = instance(&[3.0, 3.0, 3.0, 3.0], 2);
        for policy in [SchedulePolicy::Static, SchedulePolicy::DynamicGreedy] {
            let outcome = simulate_schedule(&inst, policy);
            assert_relative_eq!(outcome.makespan, 6.0);
        }
    }

    #[test]
    fn greedy_hand_trace_four_three_two_one() {
        // Worker 0 takes 4.0, worker 1 takes 3.0 then 2.0 (idle at 3.0),
        // worker 0 takes 1.0 (idle at 4.0); both finish at 5.0.
        let outcome = simulate_schedule(&instance(&[4.0, 3.0, 2.0, 1.0], 2), SchedulePolicy::DynamicGreedy);
        assert_eq!(outcome.assignment, vec![0, 1, 1, 0]);
        assert_eq!(outcome.start_times, vec![0.0, 0.0, 3.0, 4.0]);
        assert_relative_eq!(outcome.busy[0], 5.0);
        assert_relative_eq!(outcome.busy[1], 5.0);
        assert_relative_eq!(outcome.makespan, 5.0);
    }

    #[test]
    fn greedy_long_task_first_bounds_makespan() {
        let outcome = simulate_schedule(
            &instance(&[5.0, 1.0, 1.0, 1.0, 1.0, 1.0], 2),
            SchedulePolicy::DynamicGreedy,
        );
        assert_relative_eq!(outcome.makespan, 5.0);
        assert_eq!(outcome.task_counts, vec![1, 5]);
    }

    #[test]
    fn single_worker_makespan_is_the_sum() {
        let durations = [0.5, 1.25, 2.0, 0.25];
        for policy in [SchedulePolicy::Static, SchedulePolicy::DynamicGreedy] {
            let outcome = simulate_schedule(&instance(&durations, 1), policy);
            assert_relative_eq!(outcome.makespan, durations.iter().sum::<f64>());
        }
    }

    #[test]
    fn balanced_load_matches_static() {
        // m = k * n equal tasks: both policies give k * duration.
        let inst = instance(&[2.0; 12], 4);
        let s = simulate_schedule(&inst, SchedulePolicy::Static);
        let d = simulate_schedule(&inst, SchedulePolicy::DynamicGreedy);
        assert_relative_eq!(s.makespan, 6.0);
        assert_relative_eq!(d.makespan, 6.0);
    }

    #[test]
    fn instance_validation() {
        assert_eq!(
            ScheduleInstance::new(vec![], 2).unwrap_err(),
            ScheduleError::Empty
        );
        assert_eq!(
            ScheduleInstance::new(vec![1.0], 0).unwrap_err(),
            ScheduleError::NoWorkers
        );
        assert_eq!(
            ScheduleInstance::new(vec![1.0, -2.0], 1).unwrap_err(),
            ScheduleError::BadDuration(1)
        );
    }
}
