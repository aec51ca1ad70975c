use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmv_harness::artifacts::parse_list;
use dmv_harness::commands::{self, LemmaArgs};
use dmv_harness::config::{lemma_args, RawConfig, RunConfig};
use dmv_harness::{HarnessError, Outcome, EXIT_USAGE};

/// Measure-valued compressible flow experiments.
#[derive(Parser)]
#[command(name = "dmv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (flat `key = value` or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write the time series, snapshots and manifest.
    Simulate(RunArgs),
    /// Search and certify the coercivity constants of the relative pressure potential.
    VerifyLemma {
        /// Optional file with `fluid.*`, `lemma.*` and `seeds.sampling` keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long = "c-star")]
        c_star: Option<f64>,
        #[arg(long = "rho-min")]
        rho_min: Option<f64>,
        #[arg(long = "rho-max")]
        rho_max: Option<f64>,
        #[arg(long = "theta-min")]
        theta_min: Option<f64>,
        #[arg(long = "theta-max")]
        theta_max: Option<f64>,
        /// Fresh random samples for the independent check.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the relative energy inequality against the configured strong solution.
    ReiCheck(RunArgs),
    /// Perturb a constant state by each ε and test the Gronwall envelope.
    UniquenessStudy {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated perturbation sizes.
        #[arg(long, default_value = "1e-2,5e-3,2.5e-3")]
        eps: String,
    },
    /// Self-convergence orders over nested grids.
    ConvergenceStudy {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated resolutions, at least three.
        #[arg(long, default_value = "32,64,128")]
        levels: String,
    },
}

fn load(path: &Path) -> Result<RunConfig, HarnessError> {
    Ok(RunConfig::load(path)?)
}

fn configure_threads() -> Result<(), HarnessError> {
    let Ok(text) = std::env::var("DMV_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Usage(format!("DMV_THREADS must be a positive integer, got '{text}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Usage(format!("cannot size the worker pool: {e}")))
}

fn dispatch(cmd: Command) -> Result<Outcome, HarnessError> {
    configure_threads()?;
    match cmd {
        Command::Simulate(r) => commands::simulate(&load(&r.config)?, &r.out),
        Command::ReiCheck(r) => commands::rei_check(&load(&r.config)?, &r.out),
        Command::UniquenessStudy { run, eps } => {
            let eps: Vec<f64> = parse_list("--eps", &eps)?;
            commands::uniqueness_study(&load(&run.config)?, &eps, &run.out)
        }
        Command::ConvergenceStudy { run, levels } => {
            let levels: Vec<usize> = parse_list("--levels", &levels)?;
            commands::convergence_study(&load(&run.config)?, &levels, &run.out)
        }
        Command::VerifyLemma {
            config,
            out,
            gamma,
            a,
            c_star,
            rho_min,
            rho_max,
            theta_min,
            theta_max,
            samples,
            seed,
        } => {
            let mut args = match config {
                Some(p) => lemma_args(RawConfig::load(&p)?, LemmaArgs::default())?,
                None => LemmaArgs::default(),
            };
            let set = |slot: &mut f64, v: Option<f64>| {
                if let Some(v) = v {
                    *slot = v;
                }
            };
            set(&mut args.gamma, gamma);
            set(&mut args.a, a);
            set(&mut args.c_star, c_star);
            set(&mut args.rho_min, rho_min);
            set(&mut args.rho_max, rho_max);
            set(&mut args.theta_min, theta_min);
            set(&mut args.theta_max, theta_max);
            args.samples = samples.unwrap_or(args.samples);
            args.seed = seed.unwrap_or(args.seed);
            commands::verify_lemma(&args, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(outcome) => {
            if outcome.passed {
                println!("{}", outcome.message);
            } else {
                eprintln!("{}", outcome.message);
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("dmv: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_USAGE as u8))
}
