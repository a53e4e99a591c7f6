//! `lorenz-demo`: generate the observed Lorenz dataset artifact and,
//! optionally, run a small inference against it.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use abc_engine::lorenz::{
    default_initial_state, simulate_lorenz, LorenzParams, Trajectory, TRUE_THETA,
};
use abc_engine::samplers::{pmcabc, PmcabcConfig};
use abc_engine::seed::task_rng;
use abc_engine::summaries::{DatasetDistance, Euclidean, HakkarainenLorenz};
use abc_engine::{DataSet, ExecutorSpec, JointKernel};

use crate::infer::{print_posterior, write_journal};
use crate::{CliError, ModeArg};

/// Seed of the committed observed-data artifacts.
pub const OBSERVED_SEED: u64 = 42;

#[derive(Args)]
pub struct LorenzDemoArgs {
    /// Integration steps over the twenty-day window
    #[arg(long, default_value_t = 1024)]
    steps: usize,
    /// Forcing autocorrelation
    #[arg(long, default_value_t = 0.4)]
    phi: f64,
    /// Seed for the observed trajectory
    #[arg(long, default_value_t = OBSERVED_SEED)]
    seed: u64,
    /// Output directory for the dataset artifact
    #[arg(long, default_value = "data/lorenz95")]
    out_dir: PathBuf,
    /// Also run a small PMCABC inference against the generated dataset
    #[arg(long)]
    infer: bool,
    /// Particles for the inference run
    #[arg(long, default_value_t = 64)]
    n_samples: usize,
    /// Generations for the inference run
    #[arg(long, default_value_t = 3)]
    generations: usize,
    /// First-generation acceptance threshold
    #[arg(long, default_value_t = 350.0)]
    epsilon0: f64,
    /// Quantile level for the adaptive threshold
    #[arg(long, default_value_t = 0.1)]
    epsilon_percentile: f64,
    /// Worker lanes for the inference run
    #[arg(long, env = "ABC_ENGINE_WORKERS", default_value_t = 4)]
    workers: usize,
    /// Executor mode for the inference run
    #[arg(long, value_enum, default_value = "dynamic")]
    mode: ModeArg,
    /// Journal output path for the inference run
    #[arg(long, default_value = "lorenz_journal.json")]
    journal_out: PathBuf,
}

fn generate_observed(args: &LorenzDemoArgs) -> Result<(Trajectory, PathBuf), CliError> {
    let params = LorenzParams::new(TRUE_THETA[0], TRUE_THETA[1])
        .with_steps(args.steps)
        .with_phi(args.phi);
    let y0 = default_initial_state(params.forcing);
    let mut rng = task_rng(args.seed, &[]);
    let trajectory =
        simulate_lorenz(&params, &y0, &mut rng).map_err(CliError::runtime)?;

    fs::create_dir_all(&args.out_dir).map_err(CliError::runtime)?;
    let csv_path = args.out_dir.join(format!("observed_t{}.csv", args.steps));
    let file = fs::File::create(&csv_path).map_err(CliError::runtime)?;
    trajectory.write_csv(file).map_err(CliError::runtime)?;

    let meta = serde_json::json!({
        "seed": args.seed,
        "theta": TRUE_THETA,
        "t_steps": args.steps,
        "dt": params.dt(),
        "t_end": params.t_end,
        "phi": args.phi,
        "forcing": params.forcing,
        "y0_rule": "all sites at the forcing value, +0.01 at site 0",
        "standard_t_steps": 1024,
        "deviates_from_standard": args.steps != 1024,
        "rows": args.steps + 1,
        "columns": abc_engine::lorenz::N_SITES,
    });
    let meta_path = args.out_dir.join(format!("observed_t{}.meta.json", args.steps));
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(CliError::runtime)?,
    )
    .map_err(CliError::runtime)?;

    println!(
        "observed dataset ({} rows x {} columns) written to {}",
        args.steps + 1,
        abc_engine::lorenz::N_SITES,
        csv_path.display()
    );
    println!("metadata written to {}", meta_path.display());
    Ok((trajectory, csv_path))
}

pub fn run(args: LorenzDemoArgs) -> Result<(), CliError> {
    if args.steps == 0 {
        return Err(CliError::config("--steps must be at least 1"));
    }
    let (trajectory, _) = generate_observed(&args)?;

    if !args.infer {
        return Ok(());
    }

    let graph = abc_engine::lorenz::lorenz_graph(args.steps, args.phi);
    let observed = DataSet::from_single(trajectory.flatten());
    let distance = DatasetDistance::uniform(
        std::sync::Arc::new(Euclidean::new(std::sync::Arc::new(HakkarainenLorenz))),
        1,
    );
    let kernel = JointKernel::default_for(&graph);
    let mut schedule = vec![args.epsilon0];
    schedule.extend(std::iter::repeat(0.0).take(args.generations.saturating_sub(1)));
    let mut config = PmcabcConfig::new(args.n_samples, schedule);
    config.epsilon_percentile = args.epsilon_percentile;

    let executor = if args.workers <= 1 {
        ExecutorSpec::Sequential
    } else {
        args.mode.to_spec(args.workers)
    };

    println!(
        "running pmcabc: {} particles, {} generations, {} workers ({})",
        args.n_samples,
        args.generations,
        executor.workers(),
        executor.mode_name()
    );
    let journal = pmcabc(
        &graph,
        &observed,
        &distance,
        &kernel,
        &config,
        &executor,
        args.seed,
    )
    .map_err(CliError::runtime)?;

    write_journal(&journal, &args.journal_out)?;
    println!("journal written to {}", args.journal_out.display());
    print_posterior(&journal, &graph.parameter_names());
    Ok(())
}
