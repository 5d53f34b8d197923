//! Losses and their first/second derivatives with respect to the raw score.
//!
//! * regression: `l = ½ (y - ŷ)²`, so `g = ŷ - y`, `h = 1`
//! * binary: logistic loss on the log-odds, `g = σ(ŷ) - y`, `h = σ(1 - σ)`
//! * multiclass: softmax cross-entropy with a diagonal hessian,
//!   `g_c = p_c - [y = c]`, `h_c = p_c (1 - p_c)`

use thiserror::Error;

use crate::params::Task;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("{scores} raw scores for {rows} rows with {outputs} outputs")]
    Shape { scores: usize, rows: usize, outputs: usize },
    #[error("multiclass task needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
}

/// Per-row, per-output gradients and hessians, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHessVec {
    pub n_outputs: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl GradHessVec {
    pub fn n_rows(&self) -> usize {
        self.g.len().checked_div(self.n_outputs).unwrap_or(0)
    }

    /// Gradient and hessian columns for one output.
    pub fn output(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.n_outputs;
        (self.g.iter().skip(c).step_by(k).copied().collect(), self.h.iter().skip(c).step_by(k).copied().collect())
    }

    pub fn row(&self, i: usize) -> (&[f64], &[f64]) {
        let k = self.n_outputs;
        (&self.g[i * k..(i + 1) * k], &self.h[i * k..(i + 1) * k])
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&r| (r - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(raw: &[f64]) -> f64 {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + raw.iter().map(|&r| (r - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss of a single row. `raw` has one entry per output.
pub fn row_loss(task: Task, label: f64, raw: &[f64]) -> f64 {
    match task {
        Task::Regression => 0.5 * (label - raw[0]).powi(2),
        Task::Binary => softplus(raw[0]) - label * raw[0],
        Task::Multiclass => log_sum_exp(raw) - raw[label as usize],
    }
}

/// Mean loss over all rows.
pub fn mean_loss(task: Task, labels: &[f64], raw_scores: &[f64], n_outputs: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| row_loss(task, y, &raw_scores[i * n_outputs..(i + 1) * n_outputs]))
        .sum();
    total / labels.len() as f64
}

pub fn compute_grad_hess(
    task: Task,
    n_classes: usize,
    labels: &[f64],
    raw_scores: &[f64],
) -> Result<GradHessVec, LossError> {
    if task == Task::Multiclass && n_classes < 2 {
        return Err(LossError::TooFewClasses(n_classes));
    }
    let k = task.n_outputs(n_classes);
    if raw_scores.len() != labels.len() * k {
        return Err(LossError::Shape { scores: raw_scores.len(), rows: labels.len(), outputs: k });
    }
    let mut g = Vec::with_capacity(raw_scores.len());
    let mut h = Vec::with_capacity(raw_scores.len());
    match task {
        Task::Regression => {
            for (&y, &r) in labels.iter().zip(raw_scores) {
                g.push(r - y);
                h.push(1.0);
            }
        }
        Task::Binary => {
            for (&y, &r) in labels.iter().zip(raw_scores) {
                let p = sigmoid(r);
                g.push(p - y);
                h.push(p * (1.0 - p));
            }
        }
        Task::Multiclass => {
            for (i, &y) in labels.iter().enumerate() {
                let p = softmax(&raw_scores[i * k..(i + 1) * k]);
                for (c, &pc) in p.iter().enumerate() {
                    let target = if c == y as usize { 1.0 } else { 0.0 };
                    g.push(pc - target);
                    h.push(pc * (1.0 - pc));
                }
            }
        }
    }
    Ok(GradHessVec { n_outputs: k, g, h })
}
