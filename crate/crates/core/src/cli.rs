//! Command-line front end: `bench`, `replay`, `record`, `report`, `validate`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::harness::{read_csv, record_trace, write_csv, RunResult, Trace};
use crate::ir::{parse_program, validate};
use crate::runtime::LogConfig;
use crate::suites::{report_tables, suite_by_name, SuiteDefinition, SuiteError};

#[derive(Debug, Parser)]
#[command(name = "specvm", version, about = "Deterministic tiered-JIT simulator and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every benchmark of a suite under one strategy and write CSV.
    Bench(BenchArgs),
    /// Run a suite under the trace strategy with a recorded trace.
    Replay(ReplayArgs),
    /// Record the calls a workload makes into a target function.
    Record {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        workload: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print speedup tables for one or two result files.
    Report {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: Option<PathBuf>,
    },
    /// Parse and validate a program file.
    Validate {
        #[arg(long)]
        program: PathBuf,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    suite: String,
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    suite: String,
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// `key = value` overrides for the cost model and run knobs.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated log streams: compile, deopt, init.
    #[arg(long)]
    log: Option<String>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<SuiteError> for CliError {
    fn from(e: SuiteError) -> Self {
        match e {
            SuiteError::UnknownSuite(_)
            | SuiteError::UnknownStrategy(_)
            | SuiteError::UnknownBenchmark { .. }
            | SuiteError::MissingTrace
            | SuiteError::NoSetup(_)
            | SuiteError::Unsupported { .. } => CliError::Usage(e.to_string()),
            SuiteError::Harness(h) => CliError::Runtime(h.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

/// Runs the CLI on `argv` (program name first). Returns the process exit code.
pub fn cli_main<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            if let CliError::Usage(_) = e {
                let _ = writeln!(err, "\nFor more information, try 'specvm --help'.");
            }
            e.code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Bench(a) => {
            let trace = a.trace.as_deref().map(load_trace).transpose()?;
            run_suite(&a.suite, &a.strategy, trace, &a.run, out)
        }
        Command::Replay(a) => {
            let trace = load_trace(&a.trace)?;
            run_suite(&a.suite, "trace", Some(trace), &a.run, out)
        }
        Command::Record {
            suite,
            workload,
            target,
            out: path,
        } => {
            let suite = suite_by_name(&suite)?;
            let id = |name: &str| {
                suite
                    .program
                    .id_of(name)
                    .ok_or_else(|| CliError::Usage(format!("suite `{}` has no function `{name}`", suite.name)))
            };
            let (w, t) = (id(&workload)?, id(&target)?);
            let trace = record_trace(&suite.program, w, t).map_err(runtime("recording failed"))?;
            trace.write(&path).map_err(runtime("cannot write trace"))?;
            writeln!(out, "recorded {} calls to {} into {}", trace.len(), target, path.display())
                .map_err(runtime("write failed"))
        }
        Command::Report { a, b } => {
            let a = load_csv(&a)?;
            let b = b.as_deref().map(load_csv).transpose()?;
            let table = report_tables(&a, b.as_deref()).map_err(runtime("report failed"))?;
            write!(out, "{table}").map_err(runtime("write failed"))
        }
        Command::Validate { program } => {
            let text = std::fs::read_to_string(&program).map_err(runtime(&program.display().to_string()))?;
            let p = parse_program(&text).map_err(runtime("parse error"))?;
            let report = validate(&p);
            if !report.is_ok() {
                return Err(CliError::Runtime(format!("invalid program:\n{report}")));
            }
            writeln!(out, "ok: {} functions", p.functions.len()).map_err(runtime("write failed"))
        }
    }
}

fn load_trace(path: &Path) -> Result<Arc<Trace>, CliError> {
    Trace::read(path)
        .map(Arc::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_csv(path: &Path) -> Result<Vec<RunResult>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    read_csv(f).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn run_config(suite: &SuiteDefinition, run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = suite.defaults.clone();
    if let Some(path) = &run.config {
        cfg = cfg
            .load(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_suite(
    suite: &str,
    strategy: &str,
    trace: Option<Arc<Trace>>,
    run: &RunArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let suite = suite_by_name(suite)?;
    let strategy = suite.strategy(strategy, trace)?;
    let log = match &run.log {
        Some(s) => LogConfig::parse(s).map_err(CliError::Usage)?,
        None => LogConfig::default(),
    };
    let cfg = run_config(&suite, run)?;
    let results = suite.run_all(&strategy, &cfg, log)?;
    match &run.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            write_csv(BufWriter::new(f), &results).map_err(runtime("cannot write CSV"))?;
            let rows: usize = results.iter().map(|r| r.rows.len()).sum();
            writeln!(out, "wrote {rows} rows to {}", path.display()).map_err(runtime("write failed"))?;
            let table = report_tables(&results, None).map_err(runtime("report failed"))?;
            if !table.rows.is_empty() {
                write!(out, "{table}").map_err(runtime("write failed"))?;
            }
            Ok(())
        }
        None => write_csv(out, &results).map_err(runtime("cannot write CSV")),
    }
}
