//! Speedup summaries in the shape of min / max / geomean tables.

use std::fmt;

use crate::harness::{speedup_table, HarnessError, RunResult};

use super::suite_by_name;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub workload: String,
    /// What was compared, e.g. a strategy name or `do-nothing / manual-pollute`.
    pub pair: String,
    pub min: f64,
    pub max: f64,
    pub geomean: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn find(&self, workload: &str, pair: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.workload == workload && r.pair == pair)
    }
}

impl fmt::Display for ReportTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w0 = self.rows.iter().map(|r| r.workload.len()).chain([8]).max().unwrap_or(8);
        let w1 = self.rows.iter().map(|r| r.pair.len()).chain([8]).max().unwrap_or(8);
        writeln!(f, "{:<w0$}  {:<w1$}  {:>9}  {:>9}  {:>9}", "workload", "strategy", "min", "max", "geomean")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<w0$}  {:<w1$}  {:>8.4}x  {:>8.4}x  {:>8.4}x",
                r.workload, r.pair, r.min, r.max, r.geomean
            )?;
        }
        Ok(())
    }
}

fn row(workload: String, pair: String, a: &RunResult, b: &RunResult) -> Result<ReportRow, HarnessError> {
    let t = speedup_table(a, b)?;
    Ok(ReportRow {
        workload,
        pair,
        min: t.min,
        max: t.max,
        geomean: t.geomean,
    })
}

/// Rows for the suite-defined comparisons inside each result set, then, when
/// `b` is given, one row per benchmark present in both sets (`a` over `b`).
pub fn report_tables(a: &[RunResult], b: Option<&[RunResult]>) -> Result<ReportTable, HarnessError> {
    let mut rows = Vec::new();
    for set in std::iter::once(a).chain(b) {
        let mut seen: Vec<(&str, &str)> = Vec::new();
        for r in set {
            let key = (r.suite.as_str(), r.strategy.as_str());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let Ok(suite) = suite_by_name(&r.suite) else { continue };
            for c in &suite.comparisons {
                let find = |name: &str| {
                    set.iter()
                        .find(|x| x.suite == r.suite && x.strategy == r.strategy && x.benchmark == name)
                };
                if let (Some(x), Some(y)) = (find(&c.a), find(&c.b)) {
                    rows.push(row(c.label.clone(), r.strategy.clone(), x, y)?);
                }
            }
        }
    }
    if let Some(b) = b {
        for x in a {
            if let Some(y) = b.iter().find(|y| y.suite == x.suite && y.benchmark == x.benchmark) {
                let pair = format!("{} / {}", x.strategy, y.strategy);
                rows.push(row(format!("{}/{}", x.suite, x.benchmark), pair, x, y)?);
            }
        }
    }
    Ok(ReportTable { rows })
}
