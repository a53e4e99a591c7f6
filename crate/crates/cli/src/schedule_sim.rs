//! `schedule-sim`: pure scheduling simulation, no task execution.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use abc_engine::executor::{simulate_schedule, ScheduleInstance, ScheduleOutcome, SchedulePolicy};
use abc_engine::seed::task_rng;

use crate::config::read_values_file;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Static,
    Dynamic,
    Both,
}

#[derive(Args)]
pub struct ScheduleSimArgs {
    /// File of task durations (whitespace- or comma-separated seconds)
    #[arg(long, conflicts_with = "tasks")]
    durations: Option<PathBuf>,
    /// Instead of a file: generate this many lognormal durations
    #[arg(long)]
    tasks: Option<usize>,
    /// Lognormal sigma for generated durations
    #[arg(long, default_value_t = 1.5)]
    lognormal_sigma: f64,
    /// Lognormal mu for generated durations
    #[arg(long, default_value_t = 0.0)]
    lognormal_mu: f64,
    /// Seed for generated durations
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of workers
    #[arg(long, default_value_t = 8)]
    workers: usize,
    /// Allocation policy to simulate
    #[arg(long, value_enum, default_value = "both")]
    policy: PolicyArg,
    /// Output prefix: writes <out>.json and <out>_workers.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PolicyReport {
    policy: String,
    makespan: f64,
    mean_busy: f64,
    imbalance_ratio: f64,
    busy: Vec<f64>,
    task_counts: Vec<usize>,
}

fn report(policy: &str, outcome: &ScheduleOutcome) -> PolicyReport {
    let mean_busy = outcome.busy.iter().sum::<f64>() / outcome.busy.len() as f64;
    PolicyReport {
        policy: policy.to_string(),
        makespan: outcome.makespan,
        mean_busy,
        imbalance_ratio: if mean_busy > 0.0 {
            outcome.makespan / mean_busy
        } else {
            1.0
        },
        busy: outcome.busy.clone(),
        task_counts: outcome.task_counts.clone(),
    }
}

pub fn run(args: ScheduleSimArgs) -> Result<(), CliError> {
    let durations = match (&args.durations, args.tasks) {
        (Some(path), None) => read_values_file(path)?,
        (None, Some(tasks)) => {
            let dist = LogNormal::new(args.lognormal_mu, args.lognormal_sigma)
                .map_err(|e| CliError::config(format!("bad lognormal parameters: {e}")))?;
            let mut rng = task_rng(args.seed, &[]);
            (0..tasks).map(|_| dist.sample(&mut rng)).collect()
        }
        (None, None) => {
            return Err(CliError::config("provide either --durations or --tasks"))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    let instance = ScheduleInstance::new(durations, args.workers)
        .map_err(|e| CliError::config(format!("invalid schedule instance: {e}")))?;

    let policies: Vec<(&str, SchedulePolicy)> = match args.policy {
        PolicyArg::Static => vec![("static", SchedulePolicy::Static)],
        PolicyArg::Dynamic => vec![("dynamic", SchedulePolicy::DynamicGreedy)],
        PolicyArg::Both => vec![
            ("static", SchedulePolicy::Static),
            ("dynamic", SchedulePolicy::DynamicGreedy),
        ],
    };

    let reports: Vec<PolicyReport> = policies
        .iter()
        .map(|(name, policy)| {
            let outcome = simulate_schedule(&instance, *policy);
            let r = report(name, &outcome);
            println!(
                "{name}: makespan {:.4}, imbalance ratio {:.4}",
                r.makespan, r.imbalance_ratio
            );
            r
        })
        .collect();

    if let [s, d] = reports.as_slice() {
        if s.policy == "static" && d.policy == "dynamic" {
            println!("dynamic/static makespan: {:.4}", d.makespan / s.makespan);
        }
    }

    if let Some(prefix) = &args.out {
        if let Some(parent) = prefix.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(CliError::runtime)?;
            }
        }
        let json_path = prefix.with_extension("json");
        let json = serde_json::to_string_pretty(&reports).map_err(CliError::runtime)?;
        fs::write(&json_path, json).map_err(CliError::runtime)?;

        let csv_path = PathBuf::from(format!("{}_workers.csv", prefix.display()));
        let mut csv = fs::File::create(&csv_path).map_err(CliError::runtime)?;
        writeln!(csv, "policy,worker_id,busy_s,task_count").map_err(CliError::runtime)?;
        for r in &reports {
            for (worker, (busy, count)) in r.busy.iter().zip(&r.task_counts).enumerate() {
                writeln!(csv, "{},{worker},{busy},{count}", r.policy).map_err(CliError::runtime)?;
            }
        }
        println!(
            "report written to {} and {}",
            json_path.display(),
            csv_path.display()
        );
    }
    Ok(())
}
