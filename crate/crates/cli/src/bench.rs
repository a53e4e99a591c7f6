//! `bench`: repeat the same run across worker counts and report scaling.
//!
//! Either re-runs a full inference config per count (verifying that the
//! journals' numeric content is identical across counts) or times a
//! controlled sleep-task workload where the ideal speedup is known.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Args;

use abc_engine::executor::map_collect;
use abc_engine::metrics::{efficiency, speedup, write_scaling_csv, ScalingRecord};

use crate::config::{build_experiment, load_config};
use crate::infer::{apply_overrides, run_experiment};
use crate::{CliError, ModeArg};

#[derive(Args)]
pub struct BenchArgs {
    /// JSON experiment config to benchmark
    #[arg(long, conflicts_with = "sleep_tasks")]
    config: Option<PathBuf>,
    /// Instead of a config: number of synthetic sleep tasks
    #[arg(long)]
    sleep_tasks: Option<usize>,
    /// Sleep per synthetic task, milliseconds
    #[arg(long, default_value_t = 10)]
    sleep_ms: u64,
    /// Worker counts to sweep; the first is the baseline
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    workers: Vec<usize>,
    /// Executor mode for counts above 1
    #[arg(long, value_enum, default_value = "dynamic")]
    mode: ModeArg,
    /// Master seed override (config mode)
    #[arg(long)]
    seed: Option<u64>,
    /// Scaling CSV output path
    #[arg(long, default_value = "scaling.csv")]
    out: PathBuf,
}

fn spec_for(mode: ModeArg, workers: usize) -> abc_engine::ExecutorSpec {
    if workers == 1 {
        abc_engine::ExecutorSpec::Sequential
    } else {
        mode.to_spec(workers)
    }
}

fn bench_config(args: &BenchArgs, config_path: &Path) -> Result<Vec<ScalingRecord>, CliError> {
    let mut records = Vec::new();
    let mut reference: Option<serde_json::Value> = None;
    for (i, &workers) in args.workers.iter().enumerate() {
        let mut config = load_config(config_path)?;
        apply_overrides(&mut config, args.seed, Some(workers), Some(args.mode));
        if workers == 1 {
            config.executor.mode = crate::config::ExecutorMode::Sequential;
        }
        let base_dir = config_path.parent().unwrap_or(Path::new("."));
        let experiment = build_experiment(&config, base_dir)?;
        let started = Instant::now();
        let journal = run_experiment(&experiment)?;
        let wall = started.elapsed().as_secs_f64();
        records.push(ScalingRecord {
            n_cores: workers,
            wall_time_s: wall,
            baseline: i == 0,
        });
        println!("workers {workers}: {wall:.3} s");

        let view = journal.numeric_view();
        match &reference {
            None => reference = Some(view),
            Some(expected) => {
                if *expected != view {
                    return Err(CliError::runtime(format!(
                        "journals differ between worker counts {} and {workers}; \
                         results must not depend on the executor",
                        args.workers[0]
                    )));
                }
            }
        }
    }
    println!("journals identical across worker counts: yes");
    Ok(records)
}

fn bench_sleep(args: &BenchArgs, tasks: usize) -> Result<Vec<ScalingRecord>, CliError> {
    let sleep = Duration::from_millis(args.sleep_ms);
    let inputs = vec![(); tasks];
    let mut records = Vec::new();
    for (i, &workers) in args.workers.iter().enumerate() {
        let spec = spec_for(args.mode, workers);
        let started = Instant::now();
        let result = map_collect(&inputs, &spec, |_, _| -> Result<(), String> {
            std::thread::sleep(sleep);
            Ok(())
        });
        let wall = started.elapsed().as_secs_f64();
        result
            .into_payloads_and_traces()
            .map_err(|(i, e)| CliError::runtime(format!("task {i}: {e}")))?;
        records.push(ScalingRecord {
            n_cores: workers,
            wall_time_s: wall,
            baseline: i == 0,
        });
        println!("workers {workers}: {wall:.3} s");
    }
    Ok(records)
}

pub fn run(args: BenchArgs) -> Result<(), CliError> {
    if args.workers.is_empty() {
        return Err(CliError::config("--workers needs at least one count"));
    }
    let records = match (&args.config, args.sleep_tasks) {
        (Some(path), None) => bench_config(&args, &path.clone())?,
        (None, Some(tasks)) => bench_sleep(&args, tasks)?,
        (None, None) => {
            return Err(CliError::config(
                "provide either --config or --sleep-tasks",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    for record in &records {
        println!(
            "workers {:>3}: speedup {:.3}, efficiency {:.3}",
            record.n_cores,
            speedup(&records, record.n_cores).map_err(CliError::runtime)?,
            efficiency(&records, record.n_cores).map_err(CliError::runtime)?,
        );
    }

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(CliError::runtime)?;
        }
    }
    let file = fs::File::create(&args.out).map_err(CliError::runtime)?;
    write_scaling_csv(&records, file).map_err(CliError::runtime)?;
    println!("scaling table written to {}", args.out.display());
    Ok(())
}
