use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::BinnedDataset;
use crate::loss::{sigmoid, softmax};
use crate::params::Task;
use crate::tree::Tree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("row has {got} features, model expects at least {expected}")]
    RowWidth { got: usize, expected: usize },
    #[error("a round must add {expected} trees, got {got}")]
    RoundSize { expected: usize, got: usize },
    #[error("base score has {got} entries, expected {expected}")]
    BaseScore { expected: usize, got: usize },
}

/// Additive tree ensemble: `raw = base + η Σ f_k(x)`.
///
/// For multiclass tasks every round appends one tree per class; tree `i`
/// contributes to class `i % n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    task: Task,
    n_classes: usize,
    base_score: Vec<f64>,
    eta: f64,
    n_features: usize,
    trees: Vec<Tree>,
}

/// Link-function output for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Binary: probability of class 1 and the thresholded class.
    Binary {
        probability: f64,
        class: usize,
    },
    Multiclass {
        probabilities: Vec<f64>,
        class: usize,
    },
    Regression(f64),
}

impl Prediction {
    pub fn class(&self) -> Option<usize> {
        match self {
            Prediction::Binary { class, .. } | Prediction::Multiclass { class, .. } => Some(*class),
            Prediction::Regression(_) => None,
        }
    }

    /// Score used for ranking metrics: probability of the positive class
    /// or the regression value.
    pub fn score(&self) -> f64 {
        match self {
            Prediction::Binary { probability, .. } => *probability,
            Prediction::Multiclass { probabilities, class } => probabilities[*class],
            Prediction::Regression(v) => *v,
        }
    }
}

impl Ensemble {
    pub fn new(
        task: Task,
        n_classes: usize,
        n_features: usize,
        base_score: Vec<f64>,
        eta: f64,
    ) -> Result<Self, EnsembleError> {
        let k = task.n_outputs(n_classes);
        if base_score.len() != k {
            return Err(EnsembleError::BaseScore { expected: k, got: base_score.len() });
        }
        Ok(Self { task, n_classes, base_score, eta, n_features, trees: Vec::new() })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_outputs(&self) -> usize {
        self.task.n_outputs(self.n_classes)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn base_score(&self) -> &[f64] {
        &self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len() / self.n_outputs()
    }

    /// Appends the trees of one boosting round, one per output.
    pub fn push_round(&mut self, trees: Vec<Tree>) -> Result<(), EnsembleError> {
        if trees.len() != self.n_outputs() {
            return Err(EnsembleError::RoundSize { expected: self.n_outputs(), got: trees.len() });
        }
        self.trees.extend(trees);
        Ok(())
    }

    /// Drops every round after the first `rounds`.
    pub fn truncate_rounds(&mut self, rounds: usize) {
        self.trees.truncate(rounds * self.n_outputs());
    }

    fn check_row(&self, row: &[u16]) -> Result<(), EnsembleError> {
        if row.len() != self.n_features {
            return Err(EnsembleError::RowWidth { got: row.len(), expected: self.n_features });
        }
        Ok(())
    }

    pub fn predict_raw(&self, row: &[u16]) -> Result<Vec<f64>, EnsembleError> {
        self.check_row(row)?;
        let k = self.n_outputs();
        let mut raw = self.base_score.clone();
        for (i, tree) in self.trees.iter().enumerate() {
            raw[i % k] += self.eta * tree.predict(row);
        }
        Ok(raw)
    }

    /// Adds the contribution of the trees from index `first_tree` on to an
    /// existing raw score. Accumulation order matches [`predict_raw`], so a
    /// cache updated round by round stays bit-identical to a fresh
    /// prediction.
    ///
    /// [`predict_raw`]: Self::predict_raw
    pub fn accumulate_from(&self, first_tree: usize, row: &[u16], raw: &mut [f64]) {
        let k = self.n_outputs();
        for (i, tree) in self.trees.iter().enumerate().skip(first_tree) {
            raw[i % k] += self.eta * tree.predict(row);
        }
    }

    /// Raw scores for every row of `data`, row-major.
    pub fn predict_raw_dataset(&self, data: &BinnedDataset) -> Result<Vec<f64>, EnsembleError> {
        let mut out = Vec::with_capacity(data.n_rows() * self.n_outputs());
        for r in 0..data.n_rows() {
            out.extend(self.predict_raw(data.row(r))?);
        }
        Ok(out)
    }

    pub fn link(&self, raw: &[f64]) -> Prediction {
        predict_output(self.task, raw)
    }

    pub fn predict(&self, row: &[u16]) -> Result<Prediction, EnsembleError> {
        Ok(self.link(&self.predict_raw(row)?))
    }
}

/// Applies the task's link function. Binary rows with `p >= 0.5` are class 1;
/// multiclass ties go to the lowest class.
pub fn predict_output(task: Task, raw: &[f64]) -> Prediction {
    match task {
        Task::Regression => Prediction::Regression(raw[0]),
        Task::Binary => {
            let probability = sigmoid(raw[0]);
            Prediction::Binary { probability, class: usize::from(probability >= 0.5) }
        }
        Task::Multiclass => {
            let probabilities = softmax(raw);
            let mut class = 0;
            for (c, &p) in probabilities.iter().enumerate() {
                if p > probabilities[class] {
                    class = c;
                }
            }
            Prediction::Multiclass { probabilities, class }
        }
    }
}
