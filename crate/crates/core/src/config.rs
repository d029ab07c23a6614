//! Run configuration and its `key = value` file format.

use std::path::Path;

use thiserror::Error;

use crate::interp::CostModel;

/// Cost model plus the benchmark knobs a suite run may override.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub model: CostModel,
    pub forks: u32,
    pub warmup_iterations: u32,
    pub measure_iterations: u32,
    pub ops_per_iteration: u64,
    pub seed: u64,
    /// `None` keeps each benchmark's own setting.
    pub with_init: Option<bool>,
    pub parameter_values: Option<Vec<i64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: CostModel::default(),
            forks: 5,
            warmup_iterations: 5,
            measure_iterations: 5,
            ops_per_iteration: 2000,
            seed: 0,
            with_init: None,
            parameter_values: None,
        }
    }
}

pub const RUN_KEYS: [&str; 7] = [
    "forks",
    "warmup_iterations",
    "measure_iterations",
    "ops_per_iteration",
    "seed",
    "with_init",
    "parameter_values",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

impl RunConfig {
    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(mut self, text: &str) -> Result<RunConfig, ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            self.set(k, v).map_err(err)?;
        }
        self.model.check().map_err(ConfigError::Invalid)?;
        Ok(self)
    }

    pub fn load(self, path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let int = |v: &str| v.parse::<u64>().map_err(|_| format!("`{key}` expects a non-negative integer, got `{v}`"));
        let count = |v: &str| match int(v)? {
            0 => Err(format!("`{key}` must be at least 1")),
            n if n > u32::MAX as u64 => Err(format!("`{key}` is too large")),
            n => Ok(n as u32),
        };
        match key {
            "forks" => self.forks = count(value)?,
            "warmup_iterations" => self.warmup_iterations = count(value)?,
            "measure_iterations" => self.measure_iterations = count(value)?,
            "ops_per_iteration" => self.ops_per_iteration = count(value)? as u64,
            "seed" => self.seed = int(value)?,
            "with_init" => {
                self.with_init = Some(match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("`with_init` expects true or false, got `{value}`")),
                })
            }
            "parameter_values" => {
                let vals = value
                    .split(',')
                    .map(|p| p.trim().parse::<i64>().map_err(|_| format!("bad parameter value `{}`", p.trim())))
                    .collect::<Result<Vec<_>, _>>()?;
                self.parameter_values = Some(vals);
            }
            k if CostModel::KEYS.contains(&k) => {
                self.model.set(k, int(value)?);
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}
