//! Speedup, efficiency and load-imbalance analytics over executor traces.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::TaskTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no record for {0} cores")]
    MissingRecord(usize),
    #[error("scaling study needs exactly one baseline record")]
    BaselineMissing,
    #[error("scaling study has more than one baseline record")]
    MultipleBaselines,
    #[error("imbalance report needs at least one trace")]
    NoTraces,
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
}

/// One wall-time measurement of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub n_cores: usize,
    pub wall_time_s: f64,
    pub baseline: bool,
}

fn baseline(records: &[ScalingRecord]) -> Result<&ScalingRecord, MetricsError> {
    let mut found = None;
    for record in records {
        if record.baseline {
            if found.is_some() {
                return Err(MetricsError::MultipleBaselines);
            }
            found = Some(record);
        }
    }
    found.ok_or(MetricsError::BaselineMissing)
}

fn record_for(records: &[ScalingRecord], n: usize) -> Result<&ScalingRecord, MetricsError> {
    records
        .iter()
        .find(|r| r.n_cores == n)
        .ok_or(MetricsError::MissingRecord(n))
}

/// Speedup at `n` cores relative to the baseline: `t(m) / t(n)`.
pub fn speedup(records: &[ScalingRecord], n: usize) -> Result<f64, MetricsError> {
    let base = baseline(records)?;
    let at_n = record_for(records, n)?;
    Ok(base.wall_time_s / at_n.wall_time_s)
}

/// Efficiency at `n` cores: the speedup normalized by the core ratio,
/// `speedup(n) * m / n`.
pub fn efficiency(records: &[ScalingRecord], n: usize) -> Result<f64, MetricsError> {
    let base = baseline(records)?;
    Ok(speedup(records, n)? * base.n_cores as f64 / n as f64)
}

/// CSV export of a scaling study with derived speedup and efficiency
/// columns.
pub fn write_scaling_csv<W: Write>(
    records: &[ScalingRecord],
    mut out: W,
) -> Result<(), MetricsError> {
    let mut rows = records.to_vec();
    rows.sort_by_key(|r| r.n_cores);
    writeln!(out, "n_cores,wall_time_s,speedup,efficiency,baseline")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n_cores,
            r.wall_time_s,
            speedup(records, r.n_cores)?,
            efficiency(records, r.n_cores)?,
            r.baseline
        )?;
    }
    Ok(())
}

/// Per-worker load within one map call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerLoad {
    pub worker_id: usize,
    pub busy_s: f64,
    pub task_count: usize,
}

/// Aggregated imbalance view of a trace set: how unevenly the map call's
/// work spread over the lanes that could have carried it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub workers: Vec<WorkerLoad>,
    /// Completion time of the slowest task.
    pub makespan_s: f64,
    pub mean_busy_s: f64,
    /// Makespan over mean busy time; 1 means perfectly balanced.
    pub imbalance_ratio: f64,
    /// Fraction of worker-seconds spent idle before the map call finished.
    pub idle_fraction: f64,
}

impl ImbalanceReport {
    /// Aggregates traces over workers `0..=max_worker_id`.
    pub fn from_traces(traces: &[TaskTrace]) -> Result<Self, MetricsError> {
        if traces.is_empty() {
            return Err(MetricsError::NoTraces);
        }
        let n_workers = traces.iter().map(|t| t.worker_id).max().unwrap() + 1;
        let mut workers: Vec<WorkerLoad> = (0..n_workers)
            .map(|worker_id| WorkerLoad {
                worker_id,
                busy_s: 0.0,
                task_count: 0,
            })
            .collect();
        let mut makespan_s = 0.0f64;
        for trace in traces {
            workers[trace.worker_id].busy_s += trace.duration_s;
            workers[trace.worker_id].task_count += 1;
            makespan_s = makespan_s.max(trace.start_offset_s + trace.duration_s);
        }
        let mean_busy_s = workers.iter().map(|w| w.busy_s).sum::<f64>() / n_workers as f64;
        let (imbalance_ratio, idle_fraction) = if mean_busy_s > 0.0 && makespan_s > 0.0 {
            (makespan_s / mean_busy_s, 1.0 - mean_busy_s / makespan_s)
        } else {
            (1.0, 0.0)
        };
        Ok(Self {
            workers,
            makespan_s,
            mean_busy_s,
            imbalance_ratio,
            idle_fraction,
        })
    }

    /// Per-worker CSV (`worker_id,busy_s,task_count`), one bar per row.
    pub fn write_worker_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "worker_id,busy_s,task_count")?;
        for w in &self.workers {
            writeln!(out, "{},{},{}", w.worker_id, w.busy_s, w.task_count)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn records() -> Vec<ScalingRecord> {
        vec![
            ScalingRecord {
                n_cores: 2,
                wall_time_s: 100.0,
                baseline: true,
            },
            ScalingRecord {
                n_cores: 4,
                wall_time_s: 50.0,
                baseline: false,
            },
            ScalingRecord {
                n_cores: 8,
                wall_time_s: 40.0,
                baseline: false,
            },
        ]
    }

    #[test]
    fn speedup_and_efficiency_table() {
        let r = records();
        assert_relative_eq!(speedup(&r, 4).unwrap(), 2.0);
        assert_relative_eq!(speedup(&r, 2).unwrap(), 1.0);
        assert_relative_eq!(speedup(&r, 8).unwrap(), 2.5);
        // Perfect scaling from 2 to 4 cores.
        assert_relative_eq!(efficiency(&r, 4).unwrap(), 1.0);
        assert_relative_eq!(efficiency(&r, 2).unwrap(), 1.0);
        // 2.5x on 4x the cores.
        assert_relative_eq!(efficiency(&r, 8).unwrap(), 0.625);
    }

    #[test]
    fn no_scaling_halves_efficiency() {
        let r = vec![
            ScalingRecord {
                n_cores: 1,
                wall_time_s: 10.0,
                baseline: true,
            },
            ScalingRecord {
                n_cores: 2,
                wall_time_s: 10.0,
                baseline: false,
            },
        ];
        assert_relative_eq!(speedup(&r, 2).unwrap(), 1.0);
        assert_relative_eq!(efficiency(&r, 2).unwrap(), 0.5);
    }

    #[test]
    fn baseline_bookkeeping_is_enforced() {
        let mut r = records();
        assert!(matches!(
            speedup(&r, 16),
            Err(MetricsError::MissingRecord(16))
        ));
        r[1].baseline = true;
        assert!(matches!(
            speedup(&r, 4),
            Err(MetricsError::MultipleBaselines)
        ));
        r[0].baseline = false;
        r[1].baseline = false;
        assert!(matches!(speedup(&r, 4), Err(MetricsError::BaselineMissing)));
    }

    fn trace(task_index: usize, worker_id: usize, start: f64, duration: f64) -> TaskTrace {
        TaskTrace {
            task_index,
            worker_id,
            start_offset_s: start,
            duration_s: duration,
            attempts: 1,
        }
    }

    #[test]
    fn balanced_workers_report_no_imbalance() {
        let traces = vec![trace(0, 0, 0.0, 10.0), trace(1, 1, 0.0, 10.0)];
        let report = ImbalanceReport::from_traces(&traces).unwrap();
        assert_relative_eq!(report.imbalance_ratio, 1.0);
        assert_relative_eq!(report.idle_fraction, 0.0);
    }

    #[test]
    fn uneven_workers_report_hand_computed_ratio() {
        let traces = vec![trace(0, 0, 0.0, 10.0), trace(1, 1, 0.0, 5.0)];
        let report = ImbalanceReport::from_traces(&traces).unwrap();
        assert_relative_eq!(report.makespan_s, 10.0);
        assert_relative_eq!(report.mean_busy_s, 7.5);
        assert_relative_eq!(report.imbalance_ratio, 10.0 / 7.5);
        assert_relative_eq!(report.idle_fraction, 0.25);
    }

    #[test]
    fn single_worker_ratio_is_one() {
        let traces = vec![trace(0, 0, 0.0, 3.0), trace(1, 0, 3.0, 2.0)];
        let report = ImbalanceReport::from_traces(&traces).unwrap();
        assert_relative_eq!(report.imbalance_ratio, 1.0);
        assert_eq!(report.workers.len(), 1);
        assert_eq!(report.workers[0].task_count, 2);
    }

    #[test]
    fn csv_outputs_have_stable_headers() {
        let mut buf = Vec::new();
        write_scaling_csv(&records(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_cores,wall_time_s,speedup,efficiency,baseline\n"));
        assert_eq!(text.lines().count(), 4);

        let report =
            ImbalanceReport::from_traces(&[trace(0, 0, 0.0, 1.0), trace(1, 1, 0.0, 2.0)]).unwrap();
        let mut buf = Vec::new();
        report.write_worker_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("worker_id,busy_s,task_count\n"));
    }
}
