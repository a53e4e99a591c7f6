//! Instrumented map-collect execution over in-process worker lanes.
//!
//! Three scheduling modes: a sequential baseline, static chunked assignment
//! (worker `i` receives a contiguous block of tasks up front), and dynamic
//! greedy assignment (each idle lane immediately pulls the next unassigned
//! task, FIFO by task index). Task functions must be pure given their input
//! and derived seed, so the mode changes schedule traces but never payloads.
//!
//! With the `parallel` feature (default) the chunked and greedy modes run on
//! scoped OS threads and traces carry wall-clock offsets. Without it, every
//! task executes on the calling thread and traces keep the policy-faithful
//! worker assignment on a virtual clock built from measured durations.

mod schedule;

pub use schedule::{
    simulate_schedule, ScheduleError, ScheduleInstance, ScheduleOutcome, SchedulePolicy,
};

use std::io::{self, Write};
use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Which scheduling mode a map call runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "workers")]
pub enum ExecutorSpec {
    Sequential,
    StaticChunked(usize),
    DynamicGreedy(usize),
}

impl ExecutorSpec {
    pub fn workers(&self) -> usize {
        match self {
            ExecutorSpec::Sequential => 1,
            ExecutorSpec::StaticChunked(n) | ExecutorSpec::DynamicGreedy(n) => *n,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            ExecutorSpec::Sequential => "sequential",
            ExecutorSpec::StaticChunked(_) => "static",
            ExecutorSpec::DynamicGreedy(_) => "dynamic",
        }
    }
}

/// Per-task schedule record: which lane ran the task, when it started
/// relative to the map call, how long it took, and how many simulation
/// attempts the task's payload reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_index: usize,
    pub worker_id: usize,
    pub start_offset_s: f64,
    pub duration_s: f64,
    pub attempts: u64,
}

/// CSV export of schedule traces (`task_index,worker_id,start_offset_s,duration_s,attempts`).
pub fn write_traces_csv<W: Write>(traces: &[TaskTrace], mut out: W) -> io::Result<()> {
    writeln!(out, "task_index,worker_id,start_offset_s,duration_s,attempts")?;
    for t in traces {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.task_index, t.worker_id, t.start_offset_s, t.duration_s, t.attempts
        )?;
    }
    Ok(())
}

/// Outcome of one task: payload or task-level error, plus its trace.
#[derive(Debug)]
pub struct TaskEntry<O, E> {
    pub result: Result<O, E>,
    pub trace: TaskTrace,
}

/// All task outcomes of a map call, ordered by task index regardless of
/// completion order.
#[derive(Debug)]
pub struct MapResult<O, E> {
    pub entries: Vec<TaskEntry<O, E>>,
}

impl<O, E> MapResult<O, E> {
    /// Payloads in task order, or the first task-level error with its index.
    pub fn into_payloads_and_traces(self) -> Result<(Vec<O>, Vec<TaskTrace>), (usize, E)> {
        let mut payloads = Vec::with_capacity(self.entries.len());
        let mut traces = Vec::with_capacity(self.entries.len());
        for entry in self.entries {
            match entry.result {
                Ok(payload) => {
                    payloads.push(payload);
                    traces.push(entry.trace);
                }
                Err(err) => return Err((entry.trace.task_index, err)),
            }
        }
        Ok((payloads, traces))
    }

    /// Copies a per-payload attempt count into the traces.
    pub fn record_attempts(&mut self, attempts_of: impl Fn(&O) -> u64) {
        for entry in &mut self.entries {
            if let Ok(payload) = &entry.result {
                entry.trace.attempts = attempts_of(payload);
            }
        }
    }
}

/// Contiguous index ranges assigning `m` tasks to `n` workers; sizes differ
/// by at most one, with earlier workers taking the larger shares.
pub fn static_assign(m: usize, n: usize) -> Vec<Range<usize>> {
    assert!(n >= 1, "need at least one worker");
    let base = m / n;
    let remainder = m % n;
    let mut ranges = Vec::with_capacity(n);
    let mut start = 0;
    for w in 0..n {
        let size = base + usize::from(w < remainder);
        ranges.push(start..start + size);
        start += size;
    }
    ranges
}

/// Runs every task and collects results indexed by task. Task-level errors
/// are captured per entry and never abort sibling tasks.
pub fn map_collect<I, O, E, F>(inputs: &[I], spec: &ExecutorSpec, task_fn: F) -> MapResult<O, E>
where
    I: Sync,
    O: Send,
    E: Send,
    F: Fn(usize, &I) -> Result<O, E> + Sync,
{
    assert!(spec.workers() >= 1, "need at least one worker");
    match spec {
        ExecutorSpec::Sequential => run_sequential(inputs, &task_fn),
        ExecutorSpec::StaticChunked(n) => run_static(inputs, *n, &task_fn),
        ExecutorSpec::DynamicGreedy(n) => run_dynamic(inputs, *n, &task_fn),
    }
}

fn run_one<I, O, E, F>(
    inputs: &[I],
    task_fn: &F,
    index: usize,
    worker: usize,
    epoch: Instant,
) -> TaskEntry<O, E>
where
    F: Fn(usize, &I) -> Result<O, E>,
{
    let start = epoch.elapsed().as_secs_f64();
    let began = Instant::now();
    let result = task_fn(index, &inputs[index]);
    TaskEntry {
        result,
        trace: TaskTrace {
            task_index: index,
            worker_id: worker,
            start_offset_s: start,
            duration_s: began.elapsed().as_secs_f64(),
            attempts: 1,
        },
    }
}

fn run_sequential<I, O, E, F>(inputs: &[I], task_fn: &F) -> MapResult<O, E>
where
    F: Fn(usize, &I) -> Result<O, E>,
{
    let epoch = Instant::now();
    let entries = (0..inputs.len())
        .map(|i| run_one(inputs, task_fn, i, 0, epoch))
        .collect();
    MapResult { entries }
}

fn merge_sorted<O, E>(mut per_worker: Vec<Vec<TaskEntry<O, E>>>) -> MapResult<O, E> {
    let mut entries: Vec<TaskEntry<O, E>> = per_worker.drain(..).flatten().collect();
    entries.sort_by_key(|e| e.trace.task_index);
    MapResult { entries }
}

#[cfg(feature = "parallel")]
fn run_static<I, O, E, F>(inputs: &[I], workers: usize, task_fn: &F) -> MapResult<O, E>
where
    I: Sync,
    O: Send,
    E: Send,
    F: Fn(usize, &I) -> Result<O, E> + Sync,
{
    let ranges = static_assign(inputs.len(), workers);
    let epoch = Instant::now();
    let per_worker = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .into_iter()
            .enumerate()
            .map(|(worker, range)| {
                scope.spawn(move || {
                    range
                        .map(|i| run_one(inputs, task_fn, i, worker, epoch))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker lane panicked"))
            .collect::<Vec<_>>()
    });
    merge_sorted(per_worker)
}

#[cfg(feature = "parallel")]
fn run_dynamic<I, O, E, F>(inputs: &[I], workers: usize, task_fn: &F) -> MapResult<O, E>
where
    I: Sync,
    O: Send,
    E: Send,
    F: Fn(usize, &I) -> Result<O, E> + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};

    let next = AtomicUsize::new(0);
    let epoch = Instant::now();
    let per_worker = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|worker| {
                let next = &next;
                scope.spawn(move || {
                    let mut entries = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= inputs.len() {
                            break;
                        }
                        entries.push(run_one(inputs, task_fn, i, worker, epoch));
                    }
                    entries
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker lane panicked"))
            .collect::<Vec<_>>()
    });
    merge_sorted(per_worker)
}

// Sequential fallbacks: identical payloads, policy-faithful worker ids on a
// virtual clock derived from measured durations.

#[cfg(not(feature = "parallel"))]
fn run_static<I, O, E, F>(inputs: &[I], workers: usize, task_fn: &F) -> MapResult<O, E>
where
    F: Fn(usize, &I) -> Result<O, E>,
{
    let ranges = static_assign(inputs.len(), workers);
    let epoch = Instant::now();
    let mut entries = Vec::with_capacity(inputs.len());
    for (worker, range) in ranges.into_iter().enumerate() {
        let mut clock = 0.0;
        for i in range {
            let mut entry = run_one(inputs, task_fn, i, worker, epoch);
            entry.trace.start_offset_s = clock;
            clock += entry.trace.duration_s;
            entries.push(entry);
        }
    }
    entries.sort_by_key(|e| e.trace.task_index);
    MapResult { entries }
}

#[cfg(not(feature = "parallel"))]
fn run_dynamic<I, O, E, F>(inputs: &[I], workers: usize, task_fn: &F) -> MapResult<O, E>
where
    F: Fn(usize, &I) -> Result<O, E>,
{
    let epoch = Instant::now();
    let mut free = vec![0.0f64; workers];
    let mut entries = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let worker = free
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite clocks"))
            .map(|(w, _)| w)
            .expect("at least one worker");
        let mut entry = run_one(inputs, task_fn, i, worker, epoch);
        entry.trace.start_offset_s = free[worker];
        free[worker] += entry.trace.duration_s;
        entries.push(entry);
    }
    MapResult { entries }
}
