//! Split scoring and leaf weights from the second-order objective.
//!
//! For a leaf holding gradient sum `G` and hessian sum `H` the optimal weight
//! is `-G / (H + λ)` and the objective reduction it buys is
//! `G² / (H + λ) / 2`. A split's gain is the reduction of both children
//! minus the parent's, less `γ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{GradHessHistogram, GradStats};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("leaf weight undefined: H + lambda = {0} is not positive")]
pub struct DegenerateLeaf(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Rows with `bin <= bin_threshold` go left.
    pub bin_threshold: u16,
    pub gain: f64,
    pub left: GradStats,
    pub right: GradStats,
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64, DegenerateLeaf> {
    let denom = h + lambda;
    if denom <= 0.0 || denom.is_nan() {
        return Err(DegenerateLeaf(denom));
    }
    Ok(-g / denom)
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Gain of splitting `(G_L + G_R, H_L + H_R)` into the two given children.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(gl + gr, hl + hr, lambda)) - gamma
}

/// Best split of a node, or `None` when no candidate has positive gain.
///
/// Bins of each feature are scanned left to right. A candidate is only
/// considered when both children hold at least `min_child_count` rows and
/// both have a positive `H + λ`. Ties keep the earliest candidate, i.e. the
/// lowest feature index, then the lowest threshold.
pub fn best_split(hist: &GradHessHistogram, lambda: f64, gamma: f64, min_child_count: u64) -> Option<SplitCandidate> {
    let total = hist.totals();
    let mut best: Option<SplitCandidate> = None;
    for f in 0..hist.n_features() {
        let bins = hist.feature(f);
        let mut left = GradStats::default();
        for (t, &cell) in bins.iter().enumerate().take(bins.len().saturating_sub(1)) {
            left += cell;
            let right = total - left;
            if left.count < min_child_count || right.count < min_child_count {
                continue;
            }
            let (gl, hl, gr, hr) = (left.sum_g(), left.sum_h(), right.sum_g(), right.sum_h());
            if hl + lambda <= 0.0 || hr + lambda <= 0.0 {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, lambda, gamma);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate { feature: f, bin_threshold: t as u16, gain, left, right });
            }
        }
    }
    best
}
