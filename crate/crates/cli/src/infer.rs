//! `infer`: run one experiment and write its journal.

use std::fs;
use std::path::Path;

use abc_engine::samplers::{
    pmc, pmcabc, rejection_abc, Journal, PmcConfig, PmcabcConfig, RejectionConfig,
};

use crate::config::{build_experiment, load_config, Experiment, ExperimentConfig, SamplerSpec};
use crate::{CliError, InferArgs, ModeArg};

pub fn apply_overrides(
    config: &mut ExperimentConfig,
    seed: Option<u64>,
    workers: Option<usize>,
    mode: Option<ModeArg>,
) {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(workers) = workers {
        config.executor.workers = workers;
    }
    if let Some(mode) = mode {
        config.executor.mode = match mode {
            ModeArg::Sequential => crate::config::ExecutorMode::Sequential,
            ModeArg::Static => crate::config::ExecutorMode::Static,
            ModeArg::Dynamic => crate::config::ExecutorMode::Dynamic,
        };
    }
}

/// Runs the configured sampler; sampler failures map to exit code 3.
pub fn run_experiment(experiment: &Experiment) -> Result<Journal, CliError> {
    let journal = match &experiment.sampler {
        SamplerSpec::Rejection {
            n_samples,
            epsilon,
            max_attempts,
        } => {
            let mut cfg = RejectionConfig::new(*n_samples, *epsilon);
            if let Some(max) = max_attempts {
                cfg.max_attempts_per_particle = *max;
            }
            rejection_abc(
                &experiment.graph,
                &experiment.observed,
                experiment.distance.as_ref().expect("validated"),
                &cfg,
                &experiment.executor,
                experiment.seed,
            )
        }
        SamplerSpec::Pmcabc {
            n_samples,
            epsilon_schedule,
            epsilon_percentile,
            max_attempts,
        } => {
            let mut cfg = PmcabcConfig::new(*n_samples, epsilon_schedule.clone());
            if let Some(q) = epsilon_percentile {
                cfg.epsilon_percentile = *q;
            }
            if let Some(max) = max_attempts {
                cfg.max_attempts_per_particle = *max;
            }
            pmcabc(
                &experiment.graph,
                &experiment.observed,
                experiment.distance.as_ref().expect("validated"),
                &experiment.kernel,
                &cfg,
                &experiment.executor,
                experiment.seed,
            )
        }
        SamplerSpec::Pmc {
            n_samples,
            generations,
            n_sim_per_theta,
        } => {
            let cfg = PmcConfig::new(*n_samples, *generations, n_sim_per_theta.unwrap_or(100));
            pmc(
                &experiment.graph,
                &experiment.observed,
                &experiment.statistics,
                experiment.approx_likelihood.as_ref().expect("validated"),
                &experiment.kernel,
                &cfg,
                &experiment.executor,
                experiment.seed,
            )
        }
    };
    journal.map_err(CliError::runtime)
}

pub fn print_posterior(journal: &Journal, names: &[String]) {
    let t = journal.n_generations();
    let mean = journal.posterior_mean(t).expect("journal has generations");
    let cov = journal.posterior_cov(t).expect("journal has generations");
    println!("generations: {t}");
    println!("posterior mean:");
    for (name, value) in names.iter().zip(&mean.values) {
        println!("  {name}: {value}");
    }
    println!("posterior covariance:");
    for i in 0..cov.nrows() {
        let row: Vec<String> = (0..cov.ncols()).map(|j| cov[(i, j)].to_string()).collect();
        println!("  [{}]", row.join(", "));
    }
}

pub fn write_journal(journal: &Journal, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(CliError::runtime)?;
        }
    }
    let file = fs::File::create(path).map_err(CliError::runtime)?;
    journal.to_writer(file).map_err(CliError::runtime)?;
    Ok(())
}

pub fn run(args: InferArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config)?;
    apply_overrides(&mut config, args.seed, args.workers, args.mode);
    let base_dir = args.config.parent().unwrap_or(Path::new("."));
    let experiment = build_experiment(&config, base_dir)?;

    let mut journal = run_experiment(&experiment)?;
    // Echo the full resolved experiment so the journal re-validates on its
    // own.
    journal.config = serde_json::to_value(&config).map_err(CliError::runtime)?;

    write_journal(&journal, &args.out)?;
    println!("journal written to {}", args.out.display());
    print_posterior(&journal, &experiment.graph.parameter_names());
    Ok(())
}
