use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Learning task. Determines the loss, link function and default metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Regression,
}

impl Task {
    /// Number of raw outputs (and trees per round) for a task with
    /// `n_classes` classes.
    pub fn n_outputs(self, n_classes: usize) -> usize {
        match self {
            Task::Multiclass => n_classes,
            Task::Binary | Task::Regression => 1,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
            Task::Regression => "regression",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task `{0}` (expected binary, multiclass or regression)")]
pub struct UnknownTask(pub String);

impl FromStr for Task {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            "regression" => Ok(Task::Regression),
            _ => Err(UnknownTask(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid hyperparameter: {0}")]
pub struct InvalidParams(pub String);

/// Boosting hyperparameters shared by the centralized and federated trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Learning rate applied to every tree output at prediction time.
    pub eta: f64,
    /// L2 regularization on leaf weights. Also used inside the MVS
    /// regularized gradient.
    pub lambda: f64,
    pub max_depth: usize,
    pub max_bin: usize,
    /// Percentage of each client's training rows used per tree, in `1..=100`.
    pub sampling_fraction: u32,
    pub rounds: usize,
    /// Early stopping patience; `None` disables early stopping.
    pub early_stop: Option<usize>,
    /// Minimum split gain.
    pub gamma: f64,
    /// Minimum number of sampled rows on each side of a split.
    pub min_child_count: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            lambda: 0.01,
            max_depth: 6,
            max_bin: 256,
            sampling_fraction: 100,
            rounds: 200,
            early_stop: None,
            gamma: 0.0,
            min_child_count: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), InvalidParams> {
        let fail = |msg: String| Err(InvalidParams(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.max_depth < 1 {
            return fail("max_depth must be >= 1".into());
        }
        if self.max_bin < 2 || self.max_bin > u16::MAX as usize + 1 {
            return fail(format!("max_bin must be in 2..=65536, got {}", self.max_bin));
        }
        if self.sampling_fraction == 0 || self.sampling_fraction > 100 {
            return fail(format!("sampling_fraction must be in 1..=100, got {}", self.sampling_fraction));
        }
        if self.rounds < 1 {
            return fail("rounds must be >= 1".into());
        }
        if self.early_stop == Some(0) {
            return fail("early_stop must be >= 1 when set".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.min_child_count < 1 {
            return fail("min_child_count must be >= 1".into());
        }
        Ok(())
    }
}
