//! `dosetree`: fit and analyse Bayesian regression trees with
//! penalized-spline dose-response leaves.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dosetree", version, about = "Bayesian regression trees with dose-response curve leaves")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "DOSETREE_THREADS")]
    threads: Option<usize>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutArg {
    /// Output directory [default: out_dir from the config, else "."].
    #[arg(long, env = "DOSETREE_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Long-format response CSV (particle,replicate,dose[,time],response[,tray]).
    #[arg(long)]
    data: PathBuf,
    /// Covariate CSV (particle,<covariate>,...).
    #[arg(long)]
    covariates: PathBuf,
    /// Run configuration file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct McmcOverrides {
    /// MCMC sweeps per chain (overrides the config).
    #[arg(long)]
    iterations: Option<usize>,
    /// Sweeps discarded before storing draws.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Store every n-th sweep after burn-in.
    #[arg(long)]
    thin: Option<usize>,
    /// Number of chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    PerPoint,
    Averaged,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model and write the chain plus diagnostics.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mcmc: McmcOverrides,
        #[command(flatten)]
        out: OutArg,
    },
    /// Posterior predictive curves or surfaces for covariate rows.
    Predict {
        /// Chain file written by `fit`.
        #[arg(long)]
        chain: PathBuf,
        /// Covariates of the particles to predict.
        #[arg(long)]
        covariates: PathBuf,
        /// Optional response CSV whose points are overlaid.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Interval level.
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        /// Random seed of the predictive draws.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run configuration (normalization settings).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Posterior predictive check: interval coverage of observed data.
    Ppc {
        /// Chain file written by `fit`.
        #[arg(long)]
        chain: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Interval level.
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        /// Random seed of the predictive draws.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Partial dependence on one or two covariates.
    Pd {
        /// Chain file written by `fit`.
        #[arg(long)]
        chain: PathBuf,
        /// Covariate name(s): `name` or `name1,name2`.
        #[arg(long, value_delimiter = ',', num_args = 1..=2)]
        vars: Vec<String>,
        /// Evaluation point `dose` or `dose,time` (required for two covariates).
        #[arg(long, value_delimiter = ',', num_args = 1..=2)]
        at: Option<Vec<f64>>,
        /// Points per covariate grid.
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// First-order and total Sobol sensitivity indices.
    Sens {
        /// Chain file written by `fit`.
        #[arg(long)]
        chain: PathBuf,
        /// Latin hypercube base sample size.
        #[arg(long, default_value_t = 1000)]
        n_base: usize,
        /// Per grid cell plus averaged, or averaged only.
        #[arg(long, value_enum, default_value_t = ModeArg::PerPoint)]
        mode: ModeArg,
        /// Posterior draws used, at most.
        #[arg(long, default_value_t = 200)]
        max_draws: usize,
        /// Indices of noisy replicates rather than the mean surface.
        #[arg(long)]
        noise: bool,
        /// Random seed of the hypercube samples.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Leave-a-curve-out validation: refit without each particle.
    Loco {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mcmc: McmcOverrides,
        /// Interval level.
        #[arg(long)]
        level: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate a synthetic dataset from a known tree.
    Simulate {
        /// Generator spec (key = value); defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Dose x time data with six exposure times.
        #[arg(long)]
        surface: bool,
        /// Give the first particle an isolated covariate value.
        #[arg(long)]
        isolated: bool,
        /// Random seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

/// Error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let c = cause.to_string();
        if !out.contains(&c) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&c);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    let result = match cli.command {
        Command::Fit { data, mcmc, out } => commands::fit(&data, &mcmc, out.out.as_deref()),
        Command::Predict { chain, covariates, data, level, seed, config, out } => {
            commands::predict(&chain, &covariates, data.as_deref(), config.as_deref(), level, seed, out.out.as_deref())
        }
        Command::Ppc { chain, data, level, seed, out } => commands::ppc(&chain, &data, level, seed, out.out.as_deref()),
        Command::Pd { chain, vars, at, grid, out } => commands::pd(&chain, &vars, at.as_deref(), grid, out.out.as_deref()),
        Command::Sens { chain, n_base, mode, max_draws, noise, seed, out } => {
            commands::sens(&chain, n_base, mode, max_draws, noise, seed, out.out.as_deref())
        }
        Command::Loco { data, mcmc, level, out } => commands::loco(&data, &mcmc, level, out.out.as_deref()),
        Command::Simulate { spec, surface, isolated, seed, out } => {
            commands::simulate(spec.as_deref(), surface, isolated, seed, out.out.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            let numerical = e.chain().any(|c| c.downcast_ref::<dosetree::Error>().is_some_and(|d| d.is_numerical()));
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}
