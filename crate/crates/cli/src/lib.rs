//! Library side of the `pcrlb` command: configuration, output files and the
//! subcommands.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use pcrlb::experiment::run_experiment;
use pcrlb::verify::{selftest, CheckOutcome};
use pcrlb::{AggregateResult, BoundMethod};

pub use config::{parse_config, ConfigFile, RunConfig};
pub use output::{emit_plot_script, read_csv, write_csv, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("experiment failed: {0}")]
    Experiment(#[from] pcrlb::Error),
    #[error("{0} self-test check(s) failed")]
    Selftest(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Experiment(_) | CliError::Selftest(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Output(_) => 3,
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig, CliError> {
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
            cfg.file.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
            cfg.file.experiment.seed = seed;
        }
        if let Some(runs) = self.runs {
            if runs == 0 {
                return Err(CliError::Config("--runs must be at least 1".into()));
            }
            cfg.experiment.runs = runs;
            cfg.file.experiment.runs =
                i64::try_from(runs).map_err(|_| CliError::Config("--runs is too large".into()))?;
        }
        Ok(cfg)
    }
}

/// Which outputs a subcommand produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Everything: RMSE, bounds, gaps, manifest and plot script.
    Run,
    /// Bounds and gaps only.
    Bounds,
    /// Trajectories and filters only; RMSE.
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Runs the experiment for `command` and writes its outputs. Returns the
/// aggregate and the names of the files written.
pub fn execute(
    command: Command,
    cfg: &RunConfig,
) -> Result<(AggregateResult, Vec<&'static str>), CliError> {
    let mut experiment = cfg.experiment.clone();
    if command == Command::Simulate {
        experiment.methods.clear();
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    log::info!(
        "{}: {} model, horizon {}, {} runs, seed {}",
        command.name(),
        experiment.model.name(),
        experiment.horizon,
        experiment.runs,
        experiment.seed
    );
    let agg = run_experiment(&experiment)?;
    let mut files = Vec::new();
    if matches!(command, Command::Run | Command::Simulate) {
        write_csv(&output::rmse_table(&agg)?, &dir.join("rmse.csv"))?;
        files.push("rmse.csv");
    }
    if matches!(command, Command::Run | Command::Bounds) {
        write_csv(&output::bounds_table(&agg)?, &dir.join("bounds.csv"))?;
        files.push("bounds.csv");
        if experiment.methods.contains(&BoundMethod::MeanCov) {
            write_csv(&output::gap_table(&agg)?, &dir.join("gap.csv"))?;
            files.push("gap.csv");
        }
    }
    if command == Command::Run {
        emit_plot_script(dir, &dir.join("plot.gp"))?;
        files.push("plot.gp");
    }
    files.push("meta.json");
    let manifest = output::manifest_json(command.name(), &cfg.file, &agg, &files)?;
    write_text(&dir.join("meta.json"), &manifest)?;
    for g in agg.gaps.values() {
        let total: usize = g.violations.iter().sum();
        if total > 0 {
            log::info!(
                "{}: mean-only bound below mean+cov bound in {total} of {} run-steps",
                g.estimator,
                g.violations.len() * agg.runs_used()
            );
        }
    }
    Ok((agg, files))
}

/// Runs the built-in checks; fails if any check fails.
pub fn run_selftest(seed: u64) -> Result<Vec<CheckOutcome>, CliError> {
    let outcomes = selftest(seed)?;
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    for c in &outcomes {
        println!("{c}");
    }
    if failed > 0 {
        return Err(CliError::Selftest(failed));
    }
    Ok(outcomes)
}
