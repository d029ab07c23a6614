//! Results CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Phase, RunResult, RunRow};

pub const CSV_HEADER: &str =
    "suite,benchmark,param,strategy,fork,iteration,phase,virtual_cycles,ops,throughput,deopts,compiles";

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    suite: String,
    benchmark: String,
    param: i64,
    strategy: String,
    fork: u32,
    iteration: u32,
    phase: String,
    virtual_cycles: u64,
    ops: u64,
    throughput: f64,
    deopts: u64,
    compiles: u64,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be `{CSV_HEADER}`")]
    Header,
    #[error("csv row {row}: {msg}")]
    Row { row: usize, msg: String },
}

/// Writes every row of `results`, in order, under a single header.
pub fn write_csv<W: Write>(out: W, results: &[RunResult]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for row in &r.rows {
            w.serialize(Record {
                suite: r.suite.clone(),
                benchmark: r.benchmark.clone(),
                param: row.param,
                strategy: r.strategy.clone(),
                fork: row.fork,
                iteration: row.iteration,
                phase: row.phase.name().to_string(),
                virtual_cycles: row.virtual_cycles,
                ops: row.ops,
                throughput: row.throughput,
                deopts: row.deopts,
                compiles: row.compiles,
            })?;
        }
    }
    if results.iter().all(|r| r.rows.is_empty()) {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Groups rows into one result per (suite, benchmark, strategy), in first
/// appearance order. Fork logs are not stored in the CSV.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunResult>, CsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(CsvError::Header);
    }
    let mut out: Vec<RunResult> = Vec::new();
    for (i, rec) in rd.deserialize::<Record>().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let phase = Phase::parse(&rec.phase).ok_or_else(|| CsvError::Row {
            row,
            msg: format!("unknown phase `{}`", rec.phase),
        })?;
        if !(rec.throughput > 0.0 && rec.throughput.is_finite()) {
            return Err(CsvError::Row {
                row,
                msg: format!("throughput {} is not positive", rec.throughput),
            });
        }
        let rr = RunRow {
            param: rec.param,
            fork: rec.fork,
            iteration: rec.iteration,
            phase,
            virtual_cycles: rec.virtual_cycles,
            ops: rec.ops,
            throughput: rec.throughput,
            deopts: rec.deopts,
            compiles: rec.compiles,
        };
        match out
            .iter_mut()
            .find(|r| r.suite == rec.suite && r.benchmark == rec.benchmark && r.strategy == rec.strategy)
        {
            Some(r) => r.rows.push(rr),
            None => out.push(RunResult {
                suite: rec.suite,
                benchmark: rec.benchmark,
                strategy: rec.strategy,
                rows: vec![rr],
                forks: Vec::new(),
            }),
        }
    }
    Ok(out)
}
