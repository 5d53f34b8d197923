//! Centralized boosting loop and the pieces it shares with the federated
//! trainer: base scores, early stopping and round records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::BinnedDataset;
use crate::ensemble::{Ensemble, EnsembleError};
use crate::histogram::{build_grad_histograms, FixedSum, GradHessHistogram, HistogramError};
use crate::loss::{compute_grad_hess, mean_loss, LossError};
use crate::metrics::{evaluate, Metric, MetricError, MetricRecord};
use crate::params::{HyperParams, InvalidParams, Task};
use crate::sampling::{select, SamplingConfig, SamplingError};
use crate::tree::{level_histograms, route_rows, GrowParams, TreeError, TreeGrower};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Params(#[from] InvalidParams),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("class {0} does not occur in the training data")]
    AbsentClass(usize),
    #[error("no training rows")]
    NoRows,
}

/// Additive label summary a client reports at setup.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelStats {
    pub count: u64,
    pub sum: FixedSum,
    pub class_counts: Vec<u64>,
}

impl LabelStats {
    pub fn from_labels(task: Task, n_classes: usize, labels: &[f64]) -> Result<Self, HistogramError> {
        let mut stats = LabelStats { count: labels.len() as u64, sum: FixedSum::ZERO, class_counts: Vec::new() };
        match task {
            Task::Regression => {
                for &y in labels {
                    stats.sum = stats.sum.checked_add(FixedSum::from_f64(y)?)?;
                }
            }
            Task::Binary | Task::Multiclass => {
                stats.class_counts = vec![0; n_classes];
                for &y in labels {
                    stats.class_counts[y as usize] += 1;
                }
            }
        }
        Ok(stats)
    }

    pub fn merge(&mut self, other: &LabelStats) -> Result<(), HistogramError> {
        self.count += other.count;
        self.sum = self.sum.checked_add(other.sum)?;
        if self.class_counts.len() < other.class_counts.len() {
            self.class_counts.resize(other.class_counts.len(), 0);
        }
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Initial raw prediction: label mean for regression, log-odds of the
/// positive rate for binary, zeros for multiclass.
pub fn base_score(task: Task, n_classes: usize, stats: &LabelStats) -> Result<Vec<f64>, TrainError> {
    if stats.count == 0 {
        return Err(TrainError::NoRows);
    }
    if task.is_classification() {
        if let Some(c) = (0..n_classes).find(|&c| stats.class_counts.get(c).copied().unwrap_or(0) == 0) {
            return Err(TrainError::AbsentClass(c));
        }
    }
    Ok(match task {
        Task::Regression => vec![stats.sum.to_f64() / stats.count as f64],
        Task::Binary => {
            let p = stats.class_counts[1] as f64 / stats.count as f64;
            vec![(p / (1.0 - p)).ln()]
        }
        Task::Multiclass => vec![0.0; n_classes],
    })
}

/// True iff the last `patience` entries of `history` brought no strict
/// improvement over the best value seen before them.
pub fn early_stop_check(history: &[f64], patience: usize, metric: Metric) -> bool {
    let mut stopper = EarlyStopper::new(metric, Some(patience));
    history.iter().any(|&v| stopper.update(v))
}

/// Tracks the best round and how long the metric has stalled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub metric: Metric,
    pub patience: Option<usize>,
    pub best_round: usize,
    pub best_value: Option<f64>,
    pub stall_count: usize,
    rounds_seen: usize,
}

impl EarlyStopper {
    pub fn new(metric: Metric, patience: Option<usize>) -> Self {
        Self { metric, patience, best_round: 0, best_value: None, stall_count: 0, rounds_seen: 0 }
    }

    /// Records the metric of the next round; returns whether to stop.
    pub fn update(&mut self, value: f64) -> bool {
        self.rounds_seen += 1;
        let improved = match self.best_value {
            None => !value.is_nan(),
            Some(best) => self.metric.improves(value, best),
        };
        if improved {
            self.best_value = Some(value);
            self.best_round = self.rounds_seen;
            self.stall_count = 0;
        } else {
            self.stall_count += 1;
        }
        self.patience.is_some_and(|k| self.stall_count >= k)
    }
}

/// Settings shared by the centralized and federated trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub params: HyperParams,
    pub sampling: SamplingConfig,
    pub stop_metric: Metric,
    /// Keep every merged per-level histogram (memory heavy; for testing).
    #[serde(default)]
    pub trace_levels: bool,
}

impl TrainConfig {
    pub fn grow_params(&self) -> GrowParams {
        GrowParams {
            lambda: self.params.lambda,
            gamma: self.params.gamma,
            max_depth: self.params.max_depth,
            min_child_count: self.params.min_child_count,
        }
    }
}

/// Histograms that drove one tree level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTrace {
    pub round: usize,
    pub output: usize,
    pub level: usize,
    pub histograms: Vec<GradHessHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub validation: MetricRecord,
    pub train_loss: f64,
    /// `(client_id, sampled rows)`; a single entry for centralized training.
    pub sampled: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: Ensemble,
    pub history: Vec<RoundRecord>,
    pub stopper: EarlyStopper,
    pub stopped_early: bool,
    pub traces: Vec<LevelTrace>,
}

/// Boosting on a single pooled dataset. Uses sampling stream 0, so a
/// single-client federation with client id 0 reproduces it exactly.
pub fn train_centralized(
    train: &BinnedDataset,
    valid: &BinnedDataset,
    config: &TrainConfig,
) -> Result<TrainingOutcome, TrainError> {
    config.params.validate()?;
    let task = train.task();
    let n_classes = train.n_classes();
    let stats = LabelStats::from_labels(task, n_classes, train.labels())?;
    let base = base_score(task, n_classes, &stats)?;
    let mut model = Ensemble::new(task, n_classes, train.n_features(), base.clone(), config.params.eta)?;
    let k = model.n_outputs();
    let n = train.n_rows();

    let mut raw: Vec<f64> = base.iter().copied().cycle().take(n * k).collect();
    let mut valid_raw: Vec<f64> = base.iter().copied().cycle().take(valid.n_rows() * k).collect();
    let mut stopper = EarlyStopper::new(config.stop_metric, config.params.early_stop);
    let mut history = Vec::new();
    let mut traces = Vec::new();
    let mut stopped_early = false;

    for round in 1..=config.params.rounds {
        let gh = compute_grad_hess(task, n_classes, train.labels(), &raw)?;
        let rows = select(&config.sampling, n, Some(&gh), config.params.lambda, round, 0)?;
        let mut trees = Vec::with_capacity(k);
        for c in 0..k {
            let (g, h) = gh.output(c);
            let mut grower = TreeGrower::new(config.grow_params());
            let mut node_of = vec![0usize; n];
            let mut prev = Vec::new();
            while !grower.is_done() {
                let hists = level_histograms(&grower, &mut prev, |nodes| {
                    Ok(build_grad_histograms(train, &g, &h, &node_of, &rows, nodes)?)
                })?;
                if config.trace_levels {
                    traces.push(LevelTrace { round, output: c, level: grower.depth(), histograms: hists.to_vec() });
                }
                let splits = grower.apply_level(hists)?;
                route_rows(train, &mut node_of, &rows, &splits);
            }
            trees.push(grower.finish()?);
        }
        let first_new = model.trees().len();
        model.push_round(trees)?;
        for i in 0..n {
            model.accumulate_from(first_new, train.row(i), &mut raw[i * k..(i + 1) * k]);
        }
        for i in 0..valid.n_rows() {
            model.accumulate_from(first_new, valid.row(i), &mut valid_raw[i * k..(i + 1) * k]);
        }
        let validation = evaluate(task, n_classes, valid.labels(), &valid_raw)?;
        let train_loss = mean_loss(task, train.labels(), &raw, k);
        let value = validation.get(config.stop_metric).unwrap_or(f64::NAN);
        history.push(RoundRecord { round, validation, train_loss, sampled: vec![(0, rows.len())] });
        if stopper.update(value) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainingOutcome { model, history, stopper, stopped_early, traces })
}
