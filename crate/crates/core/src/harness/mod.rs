//! Benchmark driver: forks, warmup and measurement iterations, strategies.

mod csv_io;
mod stats;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::interp::{CostModel, ProfileStore, RuntimeError};
use crate::ir::{FuncId, Program, Value};
use crate::jit::CompiledMethod;
use crate::runtime::{fork, LogConfig, VmError, VmInstance};

pub use csv_io::{read_csv, write_csv, CsvError, CSV_HEADER};
pub use stats::{geomean, summarize, StatsError, StatsSummary, Z95};
pub use trace::{record_trace, Trace, TraceError, TRACE_MAGIC};

/// Deterministic argument factory for a benchmark target.
pub trait InputGenerator: Send + Sync {
    /// Descriptor used for every op of a fixed-parameter run.
    fn descriptor_for_param(&self, param: i64) -> Vec<i64>;
    /// Arguments for global operation `op`.
    fn args_for(&self, descriptor: &[i64], op: u64, seed: u64) -> Vec<Value>;
    fn validate_descriptor(&self, descriptor: &[i64]) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    DoNothing,
    /// Zero-parameter guest function run once per fork before warmup.
    ManualPollute(FuncId),
    TraceReplay(Arc<Trace>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::DoNothing => "do-nothing",
            Strategy::ManualPollute(_) => "manual-pollute",
            Strategy::TraceReplay(_) => "trace",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Warmup,
    Measure,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Measure => "measure",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "warmup" => Some(Phase::Warmup),
            "measure" => Some(Phase::Measure),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub struct BenchmarkSpec {
    pub suite: String,
    pub benchmark: String,
    pub program: Arc<Program>,
    pub target: FuncId,
    pub generator: Arc<dyn InputGenerator>,
    pub parameter_values: Vec<i64>,
    pub strategy: Strategy,
    pub forks: u32,
    pub warmup_iterations: u32,
    pub measure_iterations: u32,
    pub ops_per_iteration: u64,
    pub with_init: bool,
    pub model: CostModel,
    pub seed: u64,
    pub log: LogConfig,
}

impl fmt::Debug for BenchmarkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkSpec")
            .field("suite", &self.suite)
            .field("benchmark", &self.benchmark)
            .field("target", &self.target)
            .field("parameter_values", &self.parameter_values)
            .field("strategy", &self.strategy)
            .field("forks", &self.forks)
            .field("warmup_iterations", &self.warmup_iterations)
            .field("measure_iterations", &self.measure_iterations)
            .field("ops_per_iteration", &self.ops_per_iteration)
            .field("with_init", &self.with_init)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid benchmark spec: {0}")]
    InvalidSpec(String),
    #[error("fork {fork} (param {param}) failed during {stage}: {source}")]
    Fork {
        param: i64,
        fork: u32,
        stage: &'static str,
        source: RuntimeError,
    },
    #[error("parameter values differ between runs: {0:?} vs {1:?}")]
    ParameterMismatch(Vec<i64>, Vec<i64>),
    #[error("no measurement rows for param {0}")]
    NoMeasurements(i64),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        if self.forks == 0 || self.warmup_iterations == 0 || self.measure_iterations == 0 {
            return bad("forks and iteration counts must be at least 1".into());
        }
        if self.ops_per_iteration == 0 {
            return bad("ops_per_iteration must be at least 1".into());
        }
        if let Err(e) = self.model.check() {
            return bad(e);
        }
        if self.program.function(self.target).is_none() {
            return bad(format!("target {} is not in the program", self.target));
        }
        match &self.strategy {
            Strategy::ManualPollute(setup) => match self.program.function(*setup) {
                Some(f) if f.param_count == 0 => {}
                Some(f) => return bad(format!("setup function `{}` takes parameters", f.name)),
                None => return bad(format!("setup function {setup} is not in the program")),
            },
            Strategy::TraceReplay(trace) => {
                // A trace recorded against one implementation may drive another
                // with the same signature, so only the descriptors are checked.
                if trace.is_empty() {
                    return bad("empty trace".into());
                }
                for (i, r) in trace.records.iter().enumerate() {
                    if let Err(e) = self.generator.validate_descriptor(r) {
                        return bad(format!("trace record {}: {e}", i + 1));
                    }
                }
            }
            Strategy::DoNothing => {}
        }
        if self.parameter_values.is_empty() && !matches!(self.strategy, Strategy::TraceReplay(_)) {
            return bad("parameter_values is empty".into());
        }
        Ok(())
    }

    /// Parameters that rows are produced for; a replayed trace is one run.
    pub fn effective_params(&self) -> Vec<i64> {
        match self.strategy {
            Strategy::TraceReplay(_) => vec![0],
            _ => self.parameter_values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub param: i64,
    pub fork: u32,
    pub iteration: u32,
    pub phase: Phase,
    pub virtual_cycles: u64,
    pub ops: u64,
    pub throughput: f64,
    pub deopts: u64,
    pub compiles: u64,
}

/// What a fork left behind besides its rows.
#[derive(Debug, Clone)]
pub struct ForkLog {
    pub param: i64,
    pub fork: u32,
    pub events: Vec<String>,
    pub compiled: Vec<Arc<CompiledMethod>>,
    pub profiles: ProfileStore,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub suite: String,
    pub benchmark: String,
    pub strategy: String,
    pub rows: Vec<RunRow>,
    pub forks: Vec<ForkLog>,
}

impl RunResult {
    pub fn params(&self) -> Vec<i64> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.param) {
                seen.push(r.param);
            }
        }
        seen
    }

    pub fn measure_rows(&self, param: i64) -> impl Iterator<Item = &RunRow> {
        self.rows
            .iter()
            .filter(move |r| r.param == param && r.phase == Phase::Measure)
    }

    /// Arithmetic mean of measurement-phase throughputs.
    pub fn mean_throughput(&self, param: i64) -> Result<f64, HarnessError> {
        let v: Vec<f64> = self.measure_rows(param).map(|r| r.throughput).collect();
        if v.is_empty() {
            return Err(HarnessError::NoMeasurements(param));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summary(&self, param: i64) -> Result<StatsSummary, HarnessError> {
        let v: Vec<f64> = self.measure_rows(param).map(|r| r.throughput).collect();
        Ok(summarize(&v)?)
    }

    /// Mean measured cycles per op.
    pub fn mean_cost_per_op(&self, param: i64) -> Result<f64, HarnessError> {
        let (c, o) = self
            .measure_rows(param)
            .fold((0u64, 0u64), |(c, o), r| (c + r.virtual_cycles, o + r.ops));
        if o == 0 {
            return Err(HarnessError::NoMeasurements(param));
        }
        Ok(c as f64 / o as f64)
    }

    pub fn fork_logs(&self, param: i64) -> impl Iterator<Item = &ForkLog> {
        self.forks.iter().filter(move |f| f.param == param)
    }
}

/// Fresh fork for `param`, with the init phase and pollution setup done.
pub fn prepare_fork(spec: &BenchmarkSpec, param: i64, fork_index: u32) -> Result<VmInstance, HarnessError> {
    let err = |stage, source| HarnessError::Fork {
        param,
        fork: fork_index,
        stage,
        source,
    };
    let mut vm = match fork(Arc::clone(&spec.program), spec.model.clone(), spec.with_init) {
        Ok(vm) => vm,
        Err(VmError::Runtime(e)) => return Err(err("init", e)),
        Err(e) => return Err(HarnessError::InvalidSpec(e.to_string())),
    };
    vm.set_log(spec.log);
    if let Strategy::ManualPollute(setup) = spec.strategy {
        vm.invoke(setup, Vec::new()).map_err(|e| err("setup", e))?;
    }
    Ok(vm)
}

fn run_fork(spec: &BenchmarkSpec, param: i64, fork_index: u32) -> Result<(Vec<RunRow>, ForkLog), HarnessError> {
    let mut vm = prepare_fork(spec, param, fork_index)?;
    let fixed = spec.generator.descriptor_for_param(param);
    let total = spec.warmup_iterations + spec.measure_iterations;
    let mut rows = Vec::with_capacity(total as usize);
    for it in 0..total {
        let before = vm.cost();
        for k in 0..spec.ops_per_iteration {
            let op = it as u64 * spec.ops_per_iteration + k;
            let desc = match &spec.strategy {
                Strategy::TraceReplay(t) => t.record_for(op),
                _ => &fixed,
            };
            let args = spec.generator.args_for(desc, op, spec.seed);
            vm.invoke(spec.target, args).map_err(|source| HarnessError::Fork {
                param,
                fork: fork_index,
                stage: "measurement",
                source,
            })?;
        }
        let d = vm.cost().since(&before);
        let cycles = d.total_cycles.max(1);
        rows.push(RunRow {
            param,
            fork: fork_index,
            iteration: it,
            phase: if it < spec.warmup_iterations {
                Phase::Warmup
            } else {
                Phase::Measure
            },
            virtual_cycles: cycles,
            ops: spec.ops_per_iteration,
            throughput: spec.ops_per_iteration as f64 / cycles as f64,
            deopts: d.deopt_events,
            compiles: d.compile_events,
        });
    }
    let log = ForkLog {
        param,
        fork: fork_index,
        events: vm.event_log(),
        compiled: vm.compiled_methods().cloned().collect(),
        profiles: vm.profile_store().clone(),
    };
    Ok((rows, log))
}

/// Runs every (parameter, fork) pair, concurrently, and merges the results
/// in parameter then fork order.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<RunResult, HarnessError> {
    spec.validate()?;
    let jobs: Vec<(i64, u32)> = spec
        .effective_params()
        .into_iter()
        .flat_map(|p| (0..spec.forks).map(move |f| (p, f)))
        .collect();
    let done: Vec<Result<(Vec<RunRow>, ForkLog), HarnessError>> =
        jobs.par_iter().map(|&(p, f)| run_fork(spec, p, f)).collect();
    let mut rows = Vec::new();
    let mut forks = Vec::new();
    for r in done {
        let (rs, log) = r?;
        rows.extend(rs);
        forks.push(log);
    }
    Ok(RunResult {
        suite: spec.suite.clone(),
        benchmark: spec.benchmark.clone(),
        strategy: spec.strategy.name().to_string(),
        rows,
        forks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    /// (param, mean throughput of a / mean throughput of b).
    pub ratios: Vec<(i64, f64)>,
    pub min: f64,
    pub max: f64,
    pub geomean: f64,
}

impl SpeedupTable {
    pub fn ratio(&self, param: i64) -> Option<f64> {
        self.ratios.iter().find(|(p, _)| *p == param).map(|(_, r)| *r)
    }
}

pub fn speedup_table(a: &RunResult, b: &RunResult) -> Result<SpeedupTable, HarnessError> {
    let (pa, pb) = (a.params(), b.params());
    let (mut sa, mut sb) = (pa.clone(), pb.clone());
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb || pa.is_empty() {
        return Err(HarnessError::ParameterMismatch(pa, pb));
    }
    let ratios = pa
        .iter()
        .map(|&p| Ok((p, a.mean_throughput(p)? / b.mean_throughput(p)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    Ok(SpeedupTable {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        geomean: geomean(&values)?,
        ratios,
    })
}

/// Measured cycles per op keyed by parameter, for quick comparisons.
pub fn cost_per_op(r: &RunResult) -> Result<BTreeMap<i64, f64>, HarnessError> {
    r.params().into_iter().map(|p| Ok((p, r.mean_cost_per_op(p)?))).collect()
}
