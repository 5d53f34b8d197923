//! Evaluation metrics: accuracy, macro F1, binary ROC AUC, RMSE and R².

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::predict_output;
use crate::params::Task;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    Length(usize, usize),
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("labels have zero variance")]
    ZeroVariance,
    #[error("class index {0} out of range")]
    ClassRange(usize),
    #[error("unknown metric `{0}`")]
    Unknown(String),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::Length(a, b));
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), labels.len())?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Unweighted mean of per-class F1; a class with no predictions and no
/// support contributes 0.
pub fn f1_macro(pred: &[usize], labels: &[usize], n_classes: usize) -> Result<f64, MetricError> {
    check_lengths(pred.len(), labels.len())?;
    let mut tp = vec![0u64; n_classes];
    let mut fp = vec![0u64; n_classes];
    let mut fne = vec![0u64; n_classes];
    for (&p, &y) in pred.iter().zip(labels) {
        if p >= n_classes {
            return Err(MetricError::ClassRange(p));
        }
        if y >= n_classes {
            return Err(MetricError::ClassRange(y));
        }
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fne[y] += 1;
        }
    }
    let total: f64 = (0..n_classes)
        .map(|c| {
            // 2PR/(P+R) == 2TP / (2TP + FP + FN)
            let denom = 2 * tp[c] + fp[c] + fne[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed in exact integer arithmetic.
pub fn auc_binary(scores: &[f64], labels: &[usize]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (mut negatives_below, mut twice_u) = (0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    let positives = labels.iter().filter(|&&y| y == 1).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    Ok(twice_u as f64 / (2 * positives * negatives) as f64)
}

pub fn rmse(pred: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), labels.len())?;
    let sse: f64 = pred.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((sse / labels.len() as f64).sqrt())
}

pub fn r2(pred: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(pred.len(), labels.len())?;
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(labels).map(|(p, y)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Metrics of one evaluation; fields not applicable to the task are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: Task,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1_macro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r2: Option<f64>,
}

impl MetricRecord {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::F1 => self.f1_macro,
            Metric::Auc => self.auc,
            Metric::Rmse => self.rmse,
            Metric::R2 => self.r2,
        }
    }
}

/// Computes every metric that applies to `task` from raw scores.
///
/// AUC is omitted when only one class is present and R² when the labels are
/// constant, rather than failing the whole record.
pub fn evaluate(task: Task, n_classes: usize, labels: &[f64], raw: &[f64]) -> Result<MetricRecord, MetricError> {
    let k = task.n_outputs(n_classes);
    check_lengths(raw.len(), labels.len() * k)?;
    let mut rec =
        MetricRecord { task, n: labels.len(), accuracy: None, f1_macro: None, auc: None, rmse: None, r2: None };
    match task {
        Task::Regression => {
            rec.rmse = Some(rmse(raw, labels)?);
            rec.r2 = r2(raw, labels).ok();
        }
        Task::Binary | Task::Multiclass => {
            let preds: Vec<_> = raw.chunks(k).map(|r| predict_output(task, r)).collect();
            let classes: Vec<usize> = preds.iter().map(|p| p.class().unwrap_or(0)).collect();
            let truth: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
            let n_classes = n_classes.max(2);
            rec.accuracy = Some(accuracy(&classes, &truth)?);
            rec.f1_macro = Some(f1_macro(&classes, &truth, n_classes)?);
            if task == Task::Binary {
                let scores: Vec<f64> = preds.iter().map(|p| p.score()).collect();
                rec.auc = auc_binary(&scores, &truth).ok();
            }
        }
    }
    Ok(rec)
}

/// A scalar metric with a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    F1,
    Auc,
    Rmse,
    R2,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Rmse)
    }

    /// Whether `a` is strictly better than `b`.
    pub fn improves(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    /// Metric used for early stopping and run scoring.
    pub fn primary(task: Task) -> Metric {
        match task {
            Task::Regression => Metric::Rmse,
            Task::Binary | Task::Multiclass => Metric::Accuracy,
        }
    }

    /// Metrics reported for a task, primary first.
    pub fn reported(task: Task) -> &'static [Metric] {
        match task {
            Task::Regression => &[Metric::Rmse, Metric::R2],
            Task::Binary => &[Metric::Accuracy, Metric::Auc, Metric::F1],
            Task::Multiclass => &[Metric::Accuracy, Metric::F1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::Auc => "auc",
            Metric::Rmse => "rmse",
            Metric::R2 => "r2",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            "f1" | "f1_macro" => Ok(Metric::F1),
            "auc" => Ok(Metric::Auc),
            "rmse" => Ok(Metric::Rmse),
            "r2" => Ok(Metric::R2),
            _ => Err(MetricError::Unknown(s.to_string())),
        }
    }
}
