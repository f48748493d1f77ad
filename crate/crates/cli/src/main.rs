use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcrlb_cli::{execute, parse_config, run_selftest, CliError, Command, Overrides};

#[derive(Parser)]
#[command(
    name = "pcrlb",
    version,
    about = "Posterior Cramér-Rao bounds for nonlinear filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed; overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Monte Carlo runs; overrides `experiment.runs`.
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,

    /// Only report errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Full experiment: RMSE, bounds, gaps, manifest and plot script.
    Run,
    /// Bounds and gaps only.
    Bounds,
    /// Trajectories and filters only, reporting RMSE.
    Simulate,
    /// Kalman-equivalence and identity checks.
    Selftest,
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let command = match cli.command {
        Sub::Selftest => {
            run_selftest(cli.seed.unwrap_or(pcrlb::experiment::DEFAULT_SEED))?;
            return Ok(());
        }
        Sub::Run => Command::Run,
        Sub::Bounds => Command::Bounds,
        Sub::Simulate => Command::Simulate,
    };
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("`{}` needs --config PATH", command.name())))?;
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        runs: cli.runs,
    };
    let cfg = overrides.apply(parse_config(path)?)?;
    let (agg, files) = execute(command, &cfg)?;
    log::info!(
        "wrote {} to {} ({} of {} runs used)",
        files.join(", "),
        cfg.output_dir.display(),
        agg.runs_used(),
        agg.runs_total
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
