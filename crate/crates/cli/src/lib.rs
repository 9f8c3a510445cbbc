//! Command implementations behind the `drillpath` binary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use drillpath::config::{Config, ConfigError};
use drillpath::io::write_atomic;
use drillpath::metrics::{error_series, read_error_csv, write_error_csv, MetricsError};
use drillpath::simproto::{simulate_drilling, SimError};
use drillpath::stats::{aggregate_run, population_report, PopulationReport, StatsError};
use drillpath::streams::{align, load_recording, read_wrench_csv, write_recording, write_wrench_csv, StreamError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

/// Suffix of the wrench file written next to each error CSV.
pub const WRENCH_SUFFIX: &str = ".wrench.csv";

#[derive(Debug, Parser)]
#[command(name = "drillpath", version = VERSION, long_version = LONG_VERSION, about = "Simulate, analyze and summarize robot-assisted vertebra drillings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate drillings and write one recording bundle per run.
    Simulate {
        /// Config JSON.
        config: PathBuf,
        /// Base seed; run i (0-based) uses seed + i.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Directory receiving run_001/, run_002/, ...
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the error series of one recording bundle.
    Analyze {
        /// Recording bundle directory.
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Error series CSV; wrenches go to <stem>.wrench.csv beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a directory of error series.
    Report {
        /// Directory of error series CSVs.
        #[arg(long)]
        errors: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Plan(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("{path}: {source}")]
    ErrorCsv { path: PathBuf, source: MetricsError },
    #[error("no error series (*.csv) found in {0}")]
    EmptyInput(PathBuf),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("{path}: {source}")]
    Stats { path: PathBuf, source: StatsError },
    #[error(transparent)]
    Report(StatsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Plan(_) => 2,
            CliError::Stream(e) => match e.root() {
                StreamError::NoOverlap { .. } => 4,
                _ => 3,
            },
            CliError::Simulation(SimError::Stream(e)) if matches!(e.root(), StreamError::NoOverlap { .. }) => 4,
            CliError::ErrorCsv { .. } | CliError::Io { .. } => 3,
            CliError::EmptyInput(_) => 5,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            runs,
            out,
        } => {
            let cfg = Config::load(&config)?;
            let dirs = simulate(&cfg, seed, runs, &out)?;
            println!("wrote {} recording(s) to {}", dirs.len(), out.display());
        }
        Command::Analyze { recording, config, out } => {
            let cfg = Config::load(&config)?;
            let s = analyze(&cfg, &recording, &out)?;
            println!("{s}");
        }
        Command::Report { errors, config, out } => {
            let cfg = Config::load(&config)?;
            let r = report(&cfg, &errors, &out)?;
            println!("report over {} run(s) written to {}", r.report.run_count, out.display());
        }
    }
    Ok(())
}

pub fn run_dir_name(index: usize) -> String {
    format!("run_{:03}", index + 1)
}

/// Simulates `runs` drillings with seeds `seed + i`, cycling through the
/// configured plans, and writes `run_001/ ...` under `out`.
pub fn simulate(cfg: &Config, seed: u64, runs: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let plan = cfg.plan_for_run(i);
            let run = simulate_drilling(plan, &cfg.models, seed.wrapping_add(i as u64))?;
            let dir = out.join(run_dir_name(i));
            write_recording(&dir, &run.recording)?;
            log::info!(
                "{}: {:?} {:?}, depth {} mm at {} s",
                dir.display(),
                plan.vertebra,
                plan.side,
                run.final_depth,
                run.completion_time
            );
            Ok(dir)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSummary {
    pub samples: usize,
    pub max_e_p: f64,
    pub max_e_o: f64,
}

impl std::fmt::Display for AnalysisSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "samples={} max_e_p_mm={:?} max_e_o_deg={:?}",
            self.samples, self.max_e_p, self.max_e_o
        )
    }
}

pub fn wrench_path(error_csv: &Path) -> PathBuf {
    let name = error_csv
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".csv").unwrap_or(&name);
    error_csv.with_file_name(format!("{stem}{WRENCH_SUFFIX}"))
}

/// Aligns one bundle, computes its error series and writes it to `out`
/// with the vertebra-frame wrenches alongside.
pub fn analyze(cfg: &Config, recording: &Path, out: &Path) -> Result<AnalysisSummary, CliError> {
    let rec = load_recording(recording)?;
    let sync = align(&rec, &cfg.calibration, &cfg.analysis.align_options())?;
    for w in &sync.warnings {
        log::warn!("{}: {w}", recording.display());
    }
    let meta = &sync.meta;
    let plan = cfg.plan_for(meta.vertebra, meta.side).ok_or_else(|| {
        CliError::Plan(format!(
            "config has no plan for {:?} {:?} required by {}",
            meta.vertebra,
            meta.side,
            recording.display()
        ))
    })?;
    let series = error_series(&sync, plan, cfg.analysis.anchor_mode)?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    write_error_csv(&mut buf, &series.samples).map_err(io_err(out))?;
    write_atomic(out, &buf).map_err(io_err(out))?;
    let wpath = wrench_path(out);
    let mut buf = Vec::new();
    write_wrench_csv(&mut buf, &sync.wrenches).map_err(io_err(&wpath))?;
    write_atomic(&wpath, &buf).map_err(io_err(&wpath))?;

    Ok(AnalysisSummary {
        samples: series.samples.len(),
        max_e_p: series.max_e_p(),
        max_e_o: series.max_e_o(),
    })
}

/// Error CSVs in `dir`, sorted by name, without the wrench companions.
pub fn error_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.is_file() && name.ends_with(".csv") && !name.ends_with(WRENCH_SUFFIX) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn report(cfg: &Config, errors: &Path, out: &Path) -> Result<PopulationReport, CliError> {
    let files = error_files(errors)?;
    if files.is_empty() {
        return Err(CliError::EmptyInput(errors.to_path_buf()));
    }
    let opts = cfg.analysis.aggregate_options();
    let aggregates = files
        .par_iter()
        .map(|path| {
            let file = fs::File::open(path).map_err(io_err(path))?;
            let samples = read_error_csv(io::BufReader::new(file)).map_err(|source| CliError::ErrorCsv {
                path: path.clone(),
                source,
            })?;
            let wpath = wrench_path(path);
            let wrenches = if wpath.is_file() {
                let f = fs::File::open(&wpath).map_err(io_err(&wpath))?;
                read_wrench_csv(io::BufReader::new(f)).map_err(|e| e.in_file(&wpath))?
            } else {
                log::warn!("{}: no wrench file, using zero wrench", path.display());
                Vec::new()
            };
            aggregate_run(&samples, &wrenches, &opts).map_err(|source| CliError::Stats {
                path: path.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = population_report(&aggregates, cfg.analysis.reduce, cfg.fingerprint()).map_err(CliError::Report)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    report.write(out).map_err(io_err(out))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_version_names_schema() {
        let expected = format!("{VERSION} (config schema {})", drillpath::config::SCHEMA_VERSION);
        assert_eq!(LONG_VERSION, expected);
    }

    #[test]
    fn wrench_companion_name() {
        assert_eq!(
            wrench_path(Path::new("out/run_001.csv")),
            Path::new("out/run_001.wrench.csv")
        );
        assert_eq!(run_dir_name(0), "run_001");
        assert_eq!(run_dir_name(14), "run_015");
    }
}
