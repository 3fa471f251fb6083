//! Command-line front end: `run`, `export-field` and `sweep`.
//!
//! Exit statuses: 0 success, 1 usage/IO/parse error, 2 connectivity lost
//! (λ₂ hit zero at some step), 3 halted on an infeasible QP.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::gp_model::write_dataset_csv;
use crate::rssi_field::write_field_grid_csv;
use crate::scenario::{spreading_team, sweep_member, ScenarioError, ScenarioFile};
use crate::sim::{self, RunOutcome, RunResult, Scenario, SimError, LAMBDA2_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DISCONNECTED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Grid resolution of `field_tx<i>.csv`.
pub const FIELD_GRID_POINTS: usize = 61;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ScenarioError },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_ERROR
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Emit {
    Trajectory,
    Metrics,
    Summary,
    Dataset,
    #[value(name = "field_grid")]
    FieldGrid,
}

const ALL_EMITS: [Emit; 5] = [Emit::Trajectory, Emit::Metrics, Emit::Summary, Emit::Dataset, Emit::FieldGrid];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub overrides: Vec<String>,
    pub emit: Vec<Emit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Base settings; the built-in spreading team when absent.
    pub scenario_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub overrides: Vec<String>,
    pub emit: Vec<Emit>,
    pub counts: Vec<usize>,
    pub trials: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run(RunConfig),
    ExportField(RunConfig),
    Sweep(SweepConfig),
}

#[derive(Parser)]
#[command(name = "dcm", about = "Data-driven connectivity maintenance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Simulate one scenario.
    Run(RunArgs),
    /// Write the RSSI field around each robot's start position.
    ExportField(FieldArgs),
    /// Batch over team sizes with repeated trials.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override a scenario value, e.g. `r_c=0.7` or `field.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Outputs to write (default: all).
    #[arg(long, value_delimiter = ',')]
    emit: Vec<Emit>,
}

#[derive(Args)]
struct FieldArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Outputs per trial (default: metrics,summary).
    #[arg(long, value_delimiter = ',')]
    emit: Vec<Emit>,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20])]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn or_default(emit: Vec<Emit>, default: &[Emit]) -> Vec<Emit> {
    if emit.is_empty() {
        default.to_vec()
    } else {
        emit
    }
}

/// Parses `argv` (without the program name). `--help` surfaces as a usage
/// error carrying the help text.
pub fn parse_config<I, S>(argv: I) -> Result<Command, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = std::iter::once("dcm".into()).chain(argv.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.render().to_string()))?;
    Ok(match cli.command {
        Sub::Run(a) => Command::Run(RunConfig {
            scenario_path: a.scenario,
            out_dir: a.out,
            overrides: a.set,
            emit: or_default(a.emit, &ALL_EMITS),
        }),
        Sub::ExportField(a) => Command::ExportField(RunConfig {
            scenario_path: a.scenario,
            out_dir: a.out,
            overrides: a.set,
            emit: vec![Emit::FieldGrid],
        }),
        Sub::Sweep(a) => {
            if a.jobs == 0 || a.trials == 0 || a.counts.is_empty() {
                return Err(CliError::Usage("--jobs, --trials and --counts must be positive".into()));
            }
            Command::Sweep(SweepConfig {
                scenario_path: a.scenario,
                out_dir: a.out,
                overrides: a.set,
                emit: or_default(a.emit, &[Emit::Metrics, Emit::Summary]),
                counts: a.counts,
                trials: a.trials,
                jobs: a.jobs,
            })
        }
    })
}

fn load(path: &Path, overrides: &[String]) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ScenarioFile::parse(&text, overrides).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn build(file: &ScenarioFile, path: &Path) -> Result<Scenario, CliError> {
    file.build().map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn prepare_out_dir(dir: &Path, log: &mut dyn Write) -> Result<(), CliError> {
    if dir.exists() {
        // Best effort: a failed warning must not fail the run.
        let _ = writeln!(log, "warning: {} exists; outputs will be overwritten", dir.display());
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Exit status for a finished run.
pub fn run_status(result: &RunResult) -> i32 {
    match result.outcome {
        RunOutcome::Infeasible { .. } => EXIT_INFEASIBLE,
        RunOutcome::ConnectivityLost { .. } => EXIT_DISCONNECTED,
        RunOutcome::Completed if result.records.iter().any(|r| r.lambda2 <= LAMBDA2_TOL) => EXIT_DISCONNECTED,
        RunOutcome::Completed => EXIT_OK,
    }
}

fn write_field_grids(s: &Scenario, dir: &Path) -> Result<(), CliError> {
    let n = s.n();
    for (i, start) in s.starts().into_iter().enumerate() {
        // The receiver id only selects the pair's constant gain offset.
        let grid = s.field.grid(i, start, (i + 1) % n, FIELD_GRID_POINTS, FIELD_GRID_POINTS);
        write_file(&dir.join(format!("field_tx{i}.csv")), |w| write_field_grid_csv(w, &grid))?;
    }
    Ok(())
}

fn write_outputs(
    file: &ScenarioFile,
    s: &Scenario,
    result: &RunResult,
    overrides: &[String],
    emit: &[Emit],
    dir: &Path,
) -> Result<i32, CliError> {
    let status = run_status(result);
    for e in emit {
        match e {
            Emit::Trajectory => write_file(&dir.join("trajectory.csv"), |w| sim::write_trajectory_csv(w, &result.records))?,
            Emit::Metrics => write_file(&dir.join("metrics.csv"), |w| sim::write_metrics_csv(w, &result.records))?,
            Emit::Summary => {
                let summary = result.summary()?;
                write_file(&dir.join("summary.txt"), |w| {
                    writeln!(w, "# overrides")?;
                    for o in overrides {
                        writeln!(w, "# set {o}")?;
                    }
                    writeln!(w, "# effective config")?;
                    for line in file.to_toml().lines() {
                        writeln!(w, "# {line}")?;
                    }
                    writeln!(w, "# result")?;
                    summary.write_text(w)?;
                    writeln!(w, "exit_status = {status}")
                })?
            }
            Emit::Dataset => {
                if let Some(models) = &result.models {
                    for i in 0..s.n() {
                        for j in 0..s.n() {
                            if let Some(m) = models.get(i, j).filter(|m| !m.is_empty()) {
                                write_file(&dir.join(format!("dataset_{i}_{j}.csv")), |w| write_dataset_csv(w, m))?;
                            }
                        }
                    }
                }
            }
            Emit::FieldGrid => write_field_grids(s, dir)?,
        }
    }
    Ok(status)
}

fn execute_run(cfg: &RunConfig, log: &mut dyn Write) -> Result<i32, CliError> {
    let file = load(&cfg.scenario_path, &cfg.overrides)?;
    let s = build(&file, &cfg.scenario_path)?;
    let result = sim::run(&s)?;
    prepare_out_dir(&cfg.out_dir, log)?;
    write_outputs(&file, &s, &result, &cfg.overrides, &cfg.emit, &cfg.out_dir)
}

fn execute_export(cfg: &RunConfig, log: &mut dyn Write) -> Result<i32, CliError> {
    let file = load(&cfg.scenario_path, &cfg.overrides)?;
    let s = build(&file, &cfg.scenario_path)?;
    prepare_out_dir(&cfg.out_dir, log)?;
    write_field_grids(&s, &cfg.out_dir)?;
    Ok(EXIT_OK)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub n: usize,
    pub trial: u64,
    pub status: i32,
    pub steps: usize,
    pub min_dist: f64,
    pub min_lambda2: f64,
    pub mean_perturbation: f64,
    pub relaxed_steps: usize,
    pub seconds: f64,
}

pub const SWEEP_HEADER: &str = "n,trial,exit_status,steps,min_dist,min_lambda2,mean_perturbation,relaxed_steps,seconds";

fn run_trial(base: &ScenarioFile, cfg: &SweepConfig, n: usize, trial: u64) -> Result<TrialRow, CliError> {
    let file = sweep_member(base, n, trial);
    let s = file.build().map_err(|source| CliError::Parse {
        path: cfg.scenario_path.clone().unwrap_or_default(),
        source,
    })?;
    let t0 = Instant::now();
    let result = sim::run(&s)?;
    let seconds = t0.elapsed().as_secs_f64();
    let dir = cfg.out_dir.join(format!("n{n}_trial{trial}"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let status = write_outputs(&file, &s, &result, &cfg.overrides, &cfg.emit, &dir)?;
    let summary = result.summary()?;
    Ok(TrialRow {
        n,
        trial,
        status,
        steps: summary.steps,
        min_dist: summary.min_dist,
        min_lambda2: summary.min_lambda2,
        mean_perturbation: summary.mean_perturbation,
        relaxed_steps: summary.relaxed_steps,
        seconds,
    })
}

fn execute_sweep(cfg: &SweepConfig, log: &mut dyn Write) -> Result<i32, CliError> {
    let base = match &cfg.scenario_path {
        Some(p) => load(p, &cfg.overrides)?,
        None => ScenarioFile::parse(&spreading_team(5, 0, 700).to_toml(), &cfg.overrides)
            .map_err(|source| CliError::Parse {
                path: PathBuf::from("<built-in>"),
                source,
            })?,
    };
    prepare_out_dir(&cfg.out_dir, log)?;
    let jobs: Vec<(usize, u64)> = cfg.counts.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    // Collecting an indexed parallel iterator keeps rows in job order.
    let rows: Vec<Result<TrialRow, CliError>> =
        pool.install(|| jobs.par_iter().map(|&(n, t)| run_trial(&base, cfg, n, t)).collect());
    let rows: Vec<TrialRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let path = cfg.out_dir.join("sweep.csv");
    write_file(&path, |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3}",
                r.n, r.trial, r.status, r.steps, r.min_dist, r.min_lambda2, r.mean_perturbation, r.relaxed_steps, r.seconds
            )?;
        }
        Ok(())
    })?;
    Ok(rows.iter().map(|r| r.status).max().unwrap_or(EXIT_OK))
}

/// Runs a parsed command, logging warnings to `log`.
pub fn execute(cmd: &Command, log: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Run(c) => execute_run(c, log),
        Command::ExportField(c) => execute_export(c, log),
        Command::Sweep(c) => execute_sweep(c, log),
    }
}

/// Parses and executes; returns the process exit status.
pub fn main_with_args<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let wants_help = argv.iter().any(|a| a == "--help" || a == "-h" || a == "help");
    let result = parse_config(argv).and_then(|cmd| execute(&cmd, err));
    match result {
        Ok(code) => code,
        Err(CliError::Usage(text)) if wants_help => {
            let _ = write!(out, "{text}");
            EXIT_OK
        }
        Err(CliError::Usage(text)) => {
            let _ = write!(err, "{text}");
            EXIT_ERROR
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
