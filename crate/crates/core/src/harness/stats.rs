//! Descriptive statistics and speedup tables.

use thiserror::Error;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub stdev: f64,
    /// Half-width of the 95% confidence interval of the mean.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 measurements, got {0}")]
    TooFew(usize),
    #[error("measurement {0} is not finite")]
    NotFinite(f64),
    #[error("speedup ratios must be positive, got {0}")]
    NonPositiveRatio(f64),
}

pub fn summarize(values: &[f64]) -> Result<StatsSummary, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NotFinite(v));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let stdev = var.sqrt();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(StatsSummary {
        n,
        // Rounding can push the mean of equal values a hair outside [min, max].
        mean: mean.clamp(min, max),
        stdev,
        ci95: Z95 * stdev / (n as f64).sqrt(),
        min,
        max,
    })
}

/// exp(mean(ln x)).
pub fn geomean(ratios: &[f64]) -> Result<f64, StatsError> {
    if ratios.is_empty() {
        return Err(StatsError::TooFew(0));
    }
    if let Some(&r) = ratios.iter().find(|r| !r.is_finite() || **r <= 0.0) {
        return Err(StatsError::NonPositiveRatio(r));
    }
    let mean_ln = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
    Ok(mean_ln.exp())
}
