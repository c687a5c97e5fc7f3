//! `povmdt` command-line driver: scenario files in, CSV/JSON tables and a
//! run report out.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use povmdt_core::montecarlo::RNG_ALGORITHM;
use serde::Serialize;
use thiserror::Error;

use commands::CommandOutput;
use config::{PovmSource, Resolved, ScenarioConfig};
use output::{render_rows, write_atomic, Format};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or scenario file.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "povmdt", version, about = "Direct POVM matrix-entry characterization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Add completeness-refined estimates (oracle-check, scan).
    #[arg(long, global = true)]
    pub refine: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Exact-statistics estimates against the analytic entries.
    OracleCheck,
    /// Simulated estimates across a dephasing or rotation grid.
    Scan,
    /// Analytic, error-transfer and empirical variance along one axis.
    VarianceSweep,
    /// Overlap and phase calibration tables.
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::OracleCheck => "oracle-check",
            Command::Scan => "scan",
            Command::VarianceSweep => "variance-sweep",
            Command::Calibrate => "calibrate",
        }
    }

    fn default_povm(self) -> PovmSource {
        match self {
            Command::VarianceSweep => PovmSource::Parametric {
                theta: 0.0,
                eta: 0.5,
                coherence: 0.0,
                phase: 0.0,
            },
            _ => PovmSource::Sic {},
        }
    }
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    schema_version: u32,
    command: &'static str,
    version: &'static str,
    rng_algorithm: &'static str,
    seed: u64,
    config: &'a ScenarioConfig,
    wall_clock_seconds: f64,
    passed: bool,
    summary: &'a serde_json::Value,
    results_file: String,
    results: &'a [R],
}

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub passed: bool,
    /// Rendered table, for printing when no `--out` was given.
    pub table: Vec<u8>,
    pub summary: serde_json::Value,
}

pub fn load_scenario(cli: &Cli) -> Result<Resolved, CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            ScenarioConfig::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (ScenarioConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.resolve(&base, cli.command.default_povm())
}

pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    if cli.refine && matches!(cli.command, Command::VarianceSweep | Command::Calibrate) {
        return Err(CliError::Config(format!(
            "--refine applies to oracle-check and scan, not {}",
            cli.command.name()
        )));
    }
    let scenario = load_scenario(cli)?;
    let start = Instant::now();
    match cli.command {
        Command::OracleCheck => finish(
            cli,
            &scenario,
            start,
            commands::cmd_oracle_check(&scenario, cli.refine)?,
        ),
        Command::Scan => finish(cli, &scenario, start, commands::cmd_scan(&scenario, cli.refine)?),
        Command::VarianceSweep => finish(cli, &scenario, start, commands::cmd_variance_sweep(&scenario)?),
        Command::Calibrate => finish(cli, &scenario, start, commands::cmd_calibrate(&scenario)?),
    }
}

fn finish<R: Serialize>(
    cli: &Cli,
    scenario: &Resolved,
    start: Instant,
    out: CommandOutput<R>,
) -> Result<RunOutcome, CliError> {
    let table = render_rows(&out.rows, cli.format)?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let results_file = format!("{}.{}", cli.command.name(), cli.format.extension());
        write_atomic(&dir.join(&results_file), &table)?;
        let report = Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: cli.command.name(),
            version: povmdt_core::VERSION,
            rng_algorithm: RNG_ALGORITHM,
            seed: scenario.seed,
            config: &scenario.config,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            passed: out.passed,
            summary: &out.summary,
            results_file,
            results: &out.rows,
        };
        let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(format!("report: {e}")))?;
        bytes.push(b'\n');
        write_atomic(&dir.join("report.json"), &bytes)?;
    }
    Ok(RunOutcome {
        passed: out.passed,
        table,
        summary: out.summary,
    })
}
