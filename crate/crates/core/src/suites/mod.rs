//! Built-in case-study suites and speedup reports.

pub mod collections;
pub mod hashcode;
mod report;
pub mod stream;

use std::sync::Arc;

use thiserror::Error;

use crate::config::RunConfig;
use crate::harness::{run_benchmark, BenchmarkSpec, HarnessError, InputGenerator, RunResult, Strategy, Trace};
use crate::ir::{FuncId, Program};
use crate::runtime::LogConfig;

pub use report::{report_tables, ReportRow, ReportTable};

pub const SUITE_NAMES: [&str; 3] = ["hashcode", "stream", "collections"];
pub const STRATEGY_NAMES: [&str; 3] = ["do-nothing", "manual-pollute", "trace"];

#[derive(Clone)]
pub struct BenchmarkDef {
    pub name: String,
    pub target: FuncId,
    pub generator: Arc<dyn InputGenerator>,
    pub parameter_values: Vec<i64>,
    pub strategies: Vec<&'static str>,
    pub with_init: bool,
}

/// Benchmark `a` measured against benchmark `b` within one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub label: String,
    pub a: String,
    pub b: String,
}

/// A zero-parameter guest function whose calls into `target` make a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceWorkload {
    pub name: String,
    pub workload: FuncId,
    pub target: FuncId,
}

#[derive(Clone)]
pub struct SuiteDefinition {
    pub name: &'static str,
    pub program: Arc<Program>,
    pub benchmarks: Vec<BenchmarkDef>,
    pub comparisons: Vec<Comparison>,
    pub pollute_setup: Option<FuncId>,
    pub trace_workloads: Vec<TraceWorkload>,
    pub defaults: RunConfig,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}` (expected one of hashcode, stream, collections)")]
    UnknownSuite(String),
    #[error("unknown strategy `{0}` (expected do-nothing, manual-pollute or trace)")]
    UnknownStrategy(String),
    #[error("suite `{suite}` has no benchmark `{name}`")]
    UnknownBenchmark { suite: String, name: String },
    #[error("strategy `{strategy}` is not available for `{benchmark}`")]
    Unsupported { strategy: String, benchmark: String },
    #[error("the trace strategy needs a trace file")]
    MissingTrace,
    #[error("suite `{0}` has no pollution setup")]
    NoSetup(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

pub fn suite_by_name(name: &str) -> Result<SuiteDefinition, SuiteError> {
    match name {
        "hashcode" => Ok(hashcode::suite_hashcode()),
        "stream" => Ok(stream::suite_stream()),
        "collections" => Ok(collections::suite_collections()),
        _ => Err(SuiteError::UnknownSuite(name.to_string())),
    }
}

impl SuiteDefinition {
    pub fn benchmark(&self, name: &str) -> Result<&BenchmarkDef, SuiteError> {
        self.benchmarks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| SuiteError::UnknownBenchmark {
                suite: self.name.to_string(),
                name: name.to_string(),
            })
    }

    pub fn strategy(&self, name: &str, trace: Option<Arc<Trace>>) -> Result<Strategy, SuiteError> {
        match name {
            "do-nothing" => Ok(Strategy::DoNothing),
            "manual-pollute" => self
                .pollute_setup
                .map(Strategy::ManualPollute)
                .ok_or_else(|| SuiteError::NoSetup(self.name.to_string())),
            "trace" => trace.map(Strategy::TraceReplay).ok_or(SuiteError::MissingTrace),
            _ => Err(SuiteError::UnknownStrategy(name.to_string())),
        }
    }

    /// Benchmark spec for one benchmark under `strategy` and `cfg`.
    pub fn spec(&self, bench: &str, strategy: Strategy, cfg: &RunConfig) -> Result<BenchmarkSpec, SuiteError> {
        let b = self.benchmark(bench)?;
        if !b.strategies.contains(&strategy.name()) {
            return Err(SuiteError::Unsupported {
                strategy: strategy.name().to_string(),
                benchmark: b.name.clone(),
            });
        }
        Ok(BenchmarkSpec {
            suite: self.name.to_string(),
            benchmark: b.name.clone(),
            program: Arc::clone(&self.program),
            target: b.target,
            generator: Arc::clone(&b.generator),
            parameter_values: cfg.parameter_values.clone().unwrap_or_else(|| b.parameter_values.clone()),
            strategy,
            forks: cfg.forks,
            warmup_iterations: cfg.warmup_iterations,
            measure_iterations: cfg.measure_iterations,
            ops_per_iteration: cfg.ops_per_iteration,
            with_init: cfg.with_init.unwrap_or(b.with_init),
            model: cfg.model.clone(),
            seed: cfg.seed,
            log: LogConfig::default(),
        })
    }

    /// Runs every benchmark that supports `strategy`, in definition order.
    pub fn run_all(&self, strategy: &Strategy, cfg: &RunConfig, log: LogConfig) -> Result<Vec<RunResult>, SuiteError> {
        let mut out = Vec::new();
        for b in &self.benchmarks {
            if !b.strategies.contains(&strategy.name()) {
                continue;
            }
            let mut spec = self.spec(&b.name, strategy.clone(), cfg)?;
            spec.log = log;
            out.push(run_benchmark(&spec)?);
        }
        Ok(out)
    }
}
