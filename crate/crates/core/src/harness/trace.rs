//! Recorded call traces and their text format.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::interp::{CostModel, RuntimeError};
use crate::ir::{FuncId, Program};
use crate::runtime::VmInstance;

pub const TRACE_MAGIC: &str = "#specvm-trace v1";

/// Argument descriptors of successive calls into one target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub target: String,
    pub records: Vec<Vec<i64>>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("workload `{0}` must be a zero-parameter function")]
    BadWorkload(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Trace {
    pub fn new(target: impl Into<String>, records: Vec<Vec<i64>>) -> Result<Trace, TraceError> {
        if records.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Trace {
            target: target.into(),
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Descriptor driving global operation `op`; the trace is cycled.
    pub fn record_for(&self, op: u64) -> &[i64] {
        &self.records[(op % self.records.len() as u64) as usize]
    }

    /// Most frequent first descriptor element; ties go to the smaller value.
    pub fn modal_value(&self) -> Option<i64> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.records {
            if let Some(&v) = r.first() {
                *counts.entry(v).or_insert(0u64) += 1;
            }
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(v, _)| v)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{TRACE_MAGIC}\ntarget={}\n", self.target);
        for r in &self.records {
            let parts: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", parts.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| TraceError::Malformed {
            line: line + 1,
            msg: msg.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l.trim_end() == TRACE_MAGIC => {}
            _ => return Err(bad(0, &format!("expected `{TRACE_MAGIC}`"))),
        }
        let target = match lines.next() {
            Some((_, l)) => l
                .trim_end()
                .strip_prefix("target=")
                .filter(|t| !t.is_empty())
                .ok_or_else(|| bad(1, "expected `target=<function>`"))?
                .to_string(),
            None => return Err(bad(1, "expected `target=<function>`")),
        };
        let mut records = Vec::new();
        for (i, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let r = l
                .split_whitespace()
                .map(|t| t.parse::<i64>().map_err(|_| bad(i, &format!("`{t}` is not an integer"))))
                .collect::<Result<Vec<_>, _>>()?;
            records.push(r);
        }
        Trace::new(target, records)
    }

    pub fn read(path: &Path) -> Result<Trace, TraceError> {
        Trace::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Runs `workload` on a fresh interpreting VM and records the descriptors
/// of every call into `target`, in invocation order.
pub fn record_trace(program: &Arc<Program>, workload: FuncId, target: FuncId) -> Result<Trace, TraceError> {
    let w = program
        .function(workload)
        .ok_or_else(|| TraceError::UnknownFunction(workload.to_string()))?;
    if w.param_count != 0 {
        return Err(TraceError::BadWorkload(w.name.clone()));
    }
    let t = program
        .function(target)
        .ok_or_else(|| TraceError::UnknownFunction(target.to_string()))?;
    let mut vm = VmInstance::interpreter_only(Arc::clone(program), CostModel::default());
    vm.start_recording(target);
    vm.invoke(workload, Vec::new())?;
    Trace::new(t.name.clone(), vm.take_recording())
}
