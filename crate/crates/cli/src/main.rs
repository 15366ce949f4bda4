use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contagion_cli::commands;
use contagion_cli::config::{self, Overrides};
use contagion_core::cohort::Allocation;
use contagion_core::oracle::FaultInjection;
use contagion_core::study::{observation_time, CellSpec, EstimandSettings, HazardScenario};

/// Simulation, estimation, and causal-effect engine for transmissible
/// infection outcomes in clusters.
#[derive(Parser)]
#[command(name = "contagion", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured cells, fit the hazard model, and compute all
    /// estimands and comparators into a results table.
    Run(SharedArgs),
    /// Evaluate comparator effect curves on a time grid.
    Curves(SharedArgs),
    /// Fit the hazard coefficients to a dataset CSV.
    Fit(FitArgs),
    /// Compute the causal estimands at given model parameters.
    Estimands(EstimandCliArgs),
    /// Run the discrete-oracle identity suite (exit code = failures).
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct SharedArgs {
    /// TOML configuration file (see docs/config.md).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: table1..table4, fig3..fig5.
    #[arg(long)]
    preset: Option<String>,
    /// Master RNG seed (required here or in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `results`; env CONTAGION_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default all cores; env CONTAGION_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Clusters per cell, overriding the preset's replicate count.
    #[arg(long)]
    clusters: Option<usize>,
}

impl SharedArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            preset: self.preset.clone(),
            out_dir: self.out.clone(),
            workers: self.workers,
            clusters: self.clusters,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (columns cluster_id,individual_id,x,l_1..l_d,t_star,delta,t_obs).
    #[arg(long)]
    data: PathBuf,
    /// Hazard scenario naming the known baselines:
    /// constant | decaying_internal | seasonal_external.
    #[arg(long)]
    scenario: String,
    /// Output directory (default `results`; env CONTAGION_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimandCliArgs {
    #[arg(long, default_value = "constant")]
    scenario: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Evaluation time; defaults to the scenario observation window.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    exp_beta1: f64,
    #[arg(long, default_value_t = 0.5)]
    exp_beta2: f64,
    #[arg(long, default_value_t = 0.9)]
    exp_theta1: f64,
    #[arg(long, default_value_t = 0.9)]
    exp_theta2: f64,
    #[arg(long, default_value_t = -0.1)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    cov_variance: f64,
    #[arg(long)]
    seed: u64,
    /// Outer covariate draws.
    #[arg(long, default_value_t = 2000)]
    covariate_draws: usize,
    /// Histories per covariate draw.
    #[arg(long, default_value_t = 10)]
    histories: usize,
    /// Output directory (default `results`; env CONTAGION_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Output directory (default `results`; env CONTAGION_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mutation-test hook: corrupt the continuous evaluator and expect the
    /// suite to notice.
    #[arg(long, hide = true)]
    inject_beta2_sign_flip: bool,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Output-directory fallback chain: flag, then CONTAGION_OUT_DIR, then
/// `results`.
fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CONTAGION_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn dispatch() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides())?;
            config::with_workers(cfg.workers, || commands::run(&cfg))??;
            Ok(ExitCode::SUCCESS)
        }
        Command::Curves(args) => {
            let cfg = config::resolve(args.config.as_deref(), &args.overrides())?;
            config::with_workers(cfg.workers, || commands::curves(&cfg))??;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit(args) => {
            commands::fit(&args.data, &args.scenario, &out_dir(args.out))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimands(args) => {
            let scenario = HazardScenario::from_label(&args.scenario)?;
            let spec = CellSpec {
                scenario,
                n: args.n,
                t_obs: args.t.unwrap_or_else(|| observation_time(args.n)),
                allocation: Allocation::bernoulli(),
                rho: args.rho,
                cov_variance: args.cov_variance,
                exp_beta1: args.exp_beta1,
                exp_beta2: args.exp_beta2,
                exp_theta1: args.exp_theta1,
                exp_theta2: args.exp_theta2,
                clusters: 0,
            };
            let est = commands::EstimandArgs {
                spec,
                settings: EstimandSettings {
                    covariate_draws: args.covariate_draws,
                    histories: args.histories,
                },
                seed: args.seed,
            };
            commands::estimands(&est, &out_dir(args.out))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck(args) => {
            let fault = if args.inject_beta2_sign_flip {
                FaultInjection::FlipBeta2Sign
            } else {
                FaultInjection::None
            };
            let failures = commands::oracle_check(&out_dir(args.out), fault)?;
            if failures == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{failures} oracle checks failed");
                Ok(ExitCode::from(failures.min(255) as u8))
            }
        }
    }
}
