//! Quantile sketches, global bin edges and quantized datasets.
//!
//! A client summarizes every feature column into a [`FeatureSketch`]: the
//! sorted distinct values it observed together with their multiplicities.
//! The aggregator merges the sketches of all clients for one feature and
//! places at most `B - 1` edges at exact weighted quantiles of the union.
//! Edges sit halfway between adjacent distinct values, and a value `x`
//! falls into bin `i` when `edges[i-1] < x <= edges[i]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Task;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinningError {
    #[error("empty feature")]
    EmptyFeature,
    #[error("non-finite feature value {0}")]
    NonFinite(f64),
    #[error("max_bin must be at least 2, got {0}")]
    TooFewBins(usize),
    #[error("no sketches to merge")]
    NothingToMerge,
    #[error("sketch for feature {found} mixed into merge of feature {expected}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("edges for feature {0} are not strictly increasing")]
    UnsortedEdges(usize),
    #[error("label {label} at row {row} is not a valid class index below {n_classes}")]
    BadLabel { row: usize, label: f64, n_classes: usize },
}

/// Dense row-major matrix of feature values. `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_features: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_features: usize, values: Vec<f64>) -> Result<Self, BinningError> {
        if values.len() != n_rows * n_features {
            return Err(BinningError::Shape(format!("{} values for a {n_rows}x{n_features} matrix", values.len())));
        }
        Ok(Self { n_rows, n_features, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BinningError> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(BinningError::Shape(format!("row {i} has {} features, expected {n_features}", row.len())));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n_rows: rows.len(), n_features, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn get(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, feature)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self { n_rows: rows.len(), n_features: self.n_features, values }
    }
}

/// Per-client summary of one feature column.
///
/// `candidate_edges` holds every distinct observed value (the possible cut
/// points) and `weights` how many rows carry each of them. `edges` are the
/// client's own quantile edges over that summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSketch {
    pub feature_id: usize,
    pub candidate_edges: Vec<f64>,
    pub weights: Vec<u64>,
    pub total_count: u64,
    pub edges: Vec<f64>,
}

impl FeatureSketch {
    /// Sketch of a column with no observed values.
    pub fn empty(feature_id: usize) -> Self {
        Self { feature_id, candidate_edges: Vec::new(), weights: Vec::new(), total_count: 0, edges: Vec::new() }
    }

    /// Instance counts of the bins induced by `edges`.
    pub fn bin_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.edges.len() + 1];
        for (&v, &w) in self.candidate_edges.iter().zip(&self.weights) {
            counts[bin_value(v, &self.edges) as usize] += w;
        }
        counts
    }
}

/// Builds the sketch of a fully observed column.
pub fn build_sketch(feature_id: usize, column: &[f64], max_bins: usize) -> Result<FeatureSketch, BinningError> {
    if max_bins < 2 {
        return Err(BinningError::TooFewBins(max_bins));
    }
    if column.is_empty() {
        return Err(BinningError::EmptyFeature);
    }
    if let Some(&bad) = column.iter().find(|v| !v.is_finite()) {
        return Err(BinningError::NonFinite(bad));
    }
    let mut sorted = column.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let mut candidate_edges = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    for v in sorted {
        // -0.0 and 0.0 are one value for binning purposes
        match candidate_edges.last() {
            Some(&last) if last == v => *weights.last_mut().unwrap() += 1,
            _ => {
                candidate_edges.push(v);
                weights.push(1);
            }
        }
    }
    let edges = quantile_edges(&candidate_edges, &weights, max_bins);
    Ok(FeatureSketch { feature_id, candidate_edges, weights, total_count: column.len() as u64, edges })
}

/// Sketches a column that may contain missing (`NaN`) cells. Missing cells
/// are skipped; an all-missing column yields an empty sketch.
pub fn sketch_column(feature_id: usize, column: &[f64], max_bins: usize) -> Result<FeatureSketch, BinningError> {
    let present: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        if max_bins < 2 {
            return Err(BinningError::TooFewBins(max_bins));
        }
        return Ok(FeatureSketch::empty(feature_id));
    }
    build_sketch(feature_id, &present, max_bins)
}

/// Merges the sketches of one feature into global edges.
///
/// Distinct values are pooled with summed weights, so the result is the
/// exact weighted quantile set of the union and does not depend on the
/// order of `sketches`.
pub fn merge_sketches(sketches: &[FeatureSketch], max_bins: usize) -> Result<Vec<f64>, BinningError> {
    if max_bins < 2 {
        return Err(BinningError::TooFewBins(max_bins));
    }
    let first = sketches.first().ok_or(BinningError::NothingToMerge)?;
    let mut pairs: Vec<(f64, u64)> = Vec::new();
    for s in sketches {
        if s.feature_id != first.feature_id {
            return Err(BinningError::FeatureMismatch { expected: first.feature_id, found: s.feature_id });
        }
        pairs.extend(s.candidate_edges.iter().copied().zip(s.weights.iter().copied()));
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut points: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut weights: Vec<u64> = Vec::with_capacity(pairs.len());
    for (v, w) in pairs {
        match points.last() {
            Some(&last) if last == v => *weights.last_mut().unwrap() += w,
            _ => {
                points.push(v);
                weights.push(w);
            }
        }
    }
    Ok(quantile_edges(&points, &weights, max_bins))
}

/// Places up to `max_bins - 1` cuts over sorted distinct `points` with
/// multiplicities `weights`.
///
/// For the `k`-th cut the target rank is `k * W / B`; the cut goes after the
/// point whose cumulative weight is nearest that target (lower point on a
/// tie). Targets are compared as `B * cum` against `k * W` in integers so the
/// choice is invariant under scaling every weight by the same factor.
fn quantile_edges(points: &[f64], weights: &[u64], max_bins: usize) -> Vec<f64> {
    if points.len() < 2 {
        return Vec::new();
    }
    let bins = max_bins as u128;
    let mut cum: Vec<u128> = Vec::with_capacity(weights.len());
    let mut acc = 0u128;
    for &w in weights {
        acc += w as u128;
        cum.push(acc * bins);
    }
    let total = acc;
    let last = points.len() - 1;

    let mut edges = Vec::new();
    let mut prev_cut: Option<usize> = None;
    for k in 1..max_bins as u128 {
        let target = k * total;
        let p = cum.partition_point(|&c| c < target);
        let j = if p == 0 {
            0
        } else if p == cum.len() {
            last
        } else if target - cum[p - 1] <= cum[p] - target {
            p - 1
        } else {
            p
        };
        if j >= last || prev_cut.is_some_and(|prev| j <= prev) {
            continue;
        }
        prev_cut = Some(j);
        let (lo, hi) = (points[j], points[j + 1]);
        let mut mid = lo + (hi - lo) / 2.0;
        if mid >= hi {
            mid = lo;
        }
        edges.push(mid);
    }
    edges
}

/// Bin index of `x`: the number of edges strictly below it. Missing values
/// (`NaN`) go to bin 0.
pub fn bin_value(x: f64, edges: &[f64]) -> u32 {
    if x.is_nan() {
        return 0;
    }
    edges.partition_point(|&e| e < x) as u32
}

/// Global per-feature bin edges agreed on at setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBins {
    per_feature_edges: Vec<Vec<f64>>,
    max_bins: usize,
}

impl GlobalBins {
    pub fn new(per_feature_edges: Vec<Vec<f64>>, max_bins: usize) -> Result<Self, BinningError> {
        if max_bins < 2 {
            return Err(BinningError::TooFewBins(max_bins));
        }
        for (f, edges) in per_feature_edges.iter().enumerate() {
            if edges.len() + 1 > max_bins {
                return Err(BinningError::Shape(format!(
                    "feature {f} has {} edges, max_bin {max_bins} allows {}",
                    edges.len(),
                    max_bins - 1
                )));
            }
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(BinningError::UnsortedEdges(f));
            }
        }
        Ok(Self { per_feature_edges, max_bins })
    }

    /// Computes edges from a single pooled matrix, as a client-less setup
    /// would.
    pub fn from_matrix(matrix: &FeatureMatrix, max_bins: usize) -> Result<Self, BinningError> {
        let mut edges = Vec::with_capacity(matrix.n_features());
        for f in 0..matrix.n_features() {
            let sketch = sketch_column(f, &matrix.column(f), max_bins)?;
            edges.push(merge_sketches(&[sketch], max_bins)?);
        }
        Self::new(edges, max_bins)
    }

    pub fn n_features(&self) -> usize {
        self.per_feature_edges.len()
    }

    pub fn max_bins(&self) -> usize {
        self.max_bins
    }

    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.per_feature_edges[feature]
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.per_feature_edges[feature].len() + 1
    }

    pub fn bins_per_feature(&self) -> Vec<u32> {
        (0..self.n_features()).map(|f| self.n_bins(f) as u32).collect()
    }

    /// Quantizes one raw row.
    pub fn bin_row(&self, row: &[f64]) -> Result<Vec<u16>, BinningError> {
        if row.len() != self.n_features() {
            return Err(BinningError::Shape(format!(
                "row has {} features, bins expect {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(row.iter().zip(&self.per_feature_edges).map(|(&x, edges)| bin_value(x, edges) as u16).collect())
    }
}

/// Feature matrix quantized to bin indices, with labels.
///
/// Labels are real targets for regression and class indices (stored as
/// `f64`) for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDataset {
    bins: Vec<u16>,
    bins_per_feature: Vec<u32>,
    labels: Vec<f64>,
    n_rows: usize,
    n_classes: usize,
    task: Task,
}

impl BinnedDataset {
    pub fn new(
        bins: Vec<u16>,
        bins_per_feature: Vec<u32>,
        labels: Vec<f64>,
        task: Task,
        n_classes: usize,
    ) -> Result<Self, BinningError> {
        let n_features = bins_per_feature.len();
        let n_rows = labels.len();
        if bins.len() != n_rows * n_features {
            return Err(BinningError::Shape(format!(
                "{} bin cells for {n_rows} rows x {n_features} features",
                bins.len()
            )));
        }
        if n_rows > 0 && n_features > 0 {
            for (i, &b) in bins.iter().enumerate() {
                let f = i % n_features;
                if b as u32 >= bins_per_feature[f] {
                    return Err(BinningError::Shape(format!(
                        "bin {b} out of range for feature {f} with {} bins",
                        bins_per_feature[f]
                    )));
                }
            }
        }
        validate_labels(&labels, task, n_classes)?;
        Ok(Self { bins, bins_per_feature, labels, n_rows, n_classes, task })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.bins_per_feature.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn bins_per_feature(&self) -> &[u32] {
        &self.bins_per_feature
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let d = self.n_features();
        &self.bins[i * d..(i + 1) * d]
    }

    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[row * self.n_features() + feature]
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let d = self.n_features();
        let mut bins = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            bins.extend_from_slice(self.row(r));
        }
        Self {
            bins,
            bins_per_feature: self.bins_per_feature.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_rows: rows.len(),
            n_classes: self.n_classes,
            task: self.task,
        }
    }

    /// Stacks datasets that share a binning, in order.
    pub fn concat(parts: &[&BinnedDataset]) -> Result<Self, BinningError> {
        let first = parts.first().ok_or_else(|| BinningError::Shape("nothing to concatenate".into()))?;
        let mut out = (*first).clone();
        for p in &parts[1..] {
            if p.bins_per_feature != out.bins_per_feature || p.task != out.task || p.n_classes != out.n_classes {
                return Err(BinningError::Shape("datasets disagree on schema".into()));
            }
            out.bins.extend_from_slice(&p.bins);
            out.labels.extend_from_slice(&p.labels);
            out.n_rows += p.n_rows;
        }
        Ok(out)
    }
}

fn validate_labels(labels: &[f64], task: Task, n_classes: usize) -> Result<(), BinningError> {
    for (row, &y) in labels.iter().enumerate() {
        let ok = match task {
            Task::Regression => y.is_finite(),
            Task::Binary | Task::Multiclass => y >= 0.0 && y.fract() == 0.0 && (y as usize) < n_classes,
        };
        if !ok {
            return Err(BinningError::BadLabel { row, label: y, n_classes });
        }
    }
    Ok(())
}

/// Quantizes every cell of `raw` with `bins`; labels pass through unchanged.
pub fn bin_dataset(
    raw: &FeatureMatrix,
    labels: &[f64],
    bins: &GlobalBins,
    task: Task,
    n_classes: usize,
) -> Result<BinnedDataset, BinningError> {
    if raw.n_features() != bins.n_features() && raw.n_rows() > 0 {
        return Err(BinningError::Shape(format!(
            "matrix has {} features, bins describe {}",
            raw.n_features(),
            bins.n_features()
        )));
    }
    if labels.len() != raw.n_rows() {
        return Err(BinningError::Shape(format!("{} labels for {} rows", labels.len(), raw.n_rows())));
    }
    let mut out = Vec::with_capacity(raw.n_rows() * bins.n_features());
    for r in 0..raw.n_rows() {
        out.extend(bins.bin_row(raw.row(r))?);
    }
    BinnedDataset::new(out, bins.bins_per_feature(), labels.to_vec(), task, n_classes)
}
