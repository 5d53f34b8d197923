//! Per-node gradient/hessian histograms.
//!
//! Sums are kept in [`FixedSum`], a 128-bit fixed-point accumulator with 64
//! fractional bits. Every `f64` with magnitude at least `2^-12` converts
//! exactly, so integer addition makes merging associative and commutative:
//! the histogram of a row set does not depend on how the rows are split
//! across clients or in which order partial histograms are added.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::BinnedDataset;

const FRACTION_BITS: i32 = 64;
/// Largest magnitude accepted for a single converted value (2^62).
const MAX_MAGNITUDE: f64 = 4.611_686_018_427_388e18;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistogramError {
    #[error("bin index {bin} out of range for feature {feature} with {n_bins} bins")]
    BinOutOfRange { feature: usize, bin: u16, n_bins: u32 },
    #[error("gradient statistic {0} outside the fixed-point range")]
    OutOfRange(f64),
    #[error("accumulator overflow")]
    Overflow,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Exact fixed-point sum with 64 fractional bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FixedSum(i128);

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum(0);

    pub fn from_f64(v: f64) -> Result<Self, HistogramError> {
        if !v.is_finite() || v.abs() > MAX_MAGNITUDE {
            return Err(HistogramError::OutOfRange(v));
        }
        let scaled = v * 2f64.powi(FRACTION_BITS);
        Ok(FixedSum(scaled.round() as i128))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2f64.powi(FRACTION_BITS)
    }

    pub fn raw(self) -> i128 {
        self.0
    }

    pub fn checked_add(self, other: Self) -> Result<Self, HistogramError> {
        self.0.checked_add(other.0).map(FixedSum).ok_or(HistogramError::Overflow)
    }
}

impl Add for FixedSum {
    type Output = FixedSum;
    fn add(self, rhs: Self) -> Self {
        FixedSum(self.0 + rhs.0)
    }
}

impl AddAssign for FixedSum {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for FixedSum {
    type Output = FixedSum;
    fn sub(self, rhs: Self) -> Self {
        FixedSum(self.0 - rhs.0)
    }
}

/// Sums of gradient, hessian and row count for one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradStats {
    pub g: FixedSum,
    pub h: FixedSum,
    pub count: u64,
}

impl GradStats {
    pub fn new(g: f64, h: f64, count: u64) -> Result<Self, HistogramError> {
        Ok(Self { g: FixedSum::from_f64(g)?, h: FixedSum::from_f64(h)?, count })
    }

    pub fn sum_g(&self) -> f64 {
        self.g.to_f64()
    }

    pub fn sum_h(&self) -> f64 {
        self.h.to_f64()
    }

    pub fn is_zero(&self) -> bool {
        *self == GradStats::default()
    }
}

impl Add for GradStats {
    type Output = GradStats;
    fn add(self, rhs: Self) -> Self {
        GradStats { g: self.g + rhs.g, h: self.h + rhs.h, count: self.count + rhs.count }
    }
}

impl AddAssign for GradStats {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for GradStats {
    type Output = GradStats;
    fn sub(self, rhs: Self) -> Self {
        GradStats { g: self.g - rhs.g, h: self.h - rhs.h, count: self.count - rhs.count }
    }
}

/// Gradient histogram of one tree node: one [`GradStats`] per (feature, bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradHessHistogram {
    pub node_id: usize,
    offsets: Vec<usize>,
    cells: Vec<GradStats>,
}

impl GradHessHistogram {
    pub fn zeros(node_id: usize, bins_per_feature: &[u32]) -> Self {
        let mut offsets = Vec::with_capacity(bins_per_feature.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &b in bins_per_feature {
            acc += b as usize;
            offsets.push(acc);
        }
        Self { node_id, offsets, cells: vec![GradStats::default(); acc] }
    }

    pub fn n_features(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.offsets[feature + 1] - self.offsets[feature]
    }

    pub fn feature(&self, feature: usize) -> &[GradStats] {
        &self.cells[self.offsets[feature]..self.offsets[feature + 1]]
    }

    pub fn cell(&self, feature: usize, bin: usize) -> GradStats {
        self.feature(feature)[bin]
    }

    pub fn cell_mut(&mut self, feature: usize, bin: usize) -> &mut GradStats {
        let start = self.offsets[feature];
        &mut self.cells[start + bin]
    }

    /// Node totals. Every feature sums to the same totals; feature 0 is
    /// read. A histogram with no features has zero totals.
    pub fn totals(&self) -> GradStats {
        if self.n_features() == 0 {
            return GradStats::default();
        }
        self.feature(0).iter().fold(GradStats::default(), |a, &c| a + c)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.offsets == other.offsets
    }

    /// `self − other` as the histogram of node `node_id`. Exact, since the
    /// sums are fixed-point; fails if `other` is not contained in `self`.
    pub fn difference(&self, other: &Self, node_id: usize) -> Result<Self, HistogramError> {
        if !self.same_layout(other) {
            return Err(HistogramError::Shape("cannot subtract histograms of different layouts".into()));
        }
        let cells = self
            .cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| {
                let count = a.count.checked_sub(b.count).ok_or(HistogramError::Overflow)?;
                Ok(GradStats { g: a.g - b.g, h: a.h - b.h, count })
            })
            .collect::<Result<Vec<_>, HistogramError>>()?;
        Ok(Self { node_id, offsets: self.offsets.clone(), cells })
    }

    /// Adds another histogram of the same node and layout into this one.
    pub fn merge(&mut self, other: &Self) -> Result<(), HistogramError> {
        if !self.same_layout(other) || self.node_id != other.node_id {
            return Err(HistogramError::Shape(format!(
                "cannot merge histogram of node {} into node {}",
                other.node_id, self.node_id
            )));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            if b.count == 0 {
                continue;
            }
            a.g = a.g.checked_add(b.g)?;
            a.h = a.h.checked_add(b.h)?;
            a.count += b.count;
        }
        Ok(())
    }
}

/// Builds one histogram per node in `nodes` from the rows listed in `rows`.
///
/// `grad` and `hess` are indexed by row. `node_of[row]` names the node a
/// row currently sits in; rows whose node is not in `nodes` are ignored.
pub fn build_grad_histograms(
    data: &BinnedDataset,
    grad: &[f64],
    hess: &[f64],
    node_of: &[usize],
    rows: &[usize],
    nodes: &[usize],
) -> Result<Vec<GradHessHistogram>, HistogramError> {
    if grad.len() != data.n_rows() || hess.len() != data.n_rows() {
        return Err(HistogramError::Shape(format!(
            "{} gradients / {} hessians for {} rows",
            grad.len(),
            hess.len(),
            data.n_rows()
        )));
    }
    if node_of.len() != data.n_rows() {
        return Err(HistogramError::Shape(format!("{} node assignments for {} rows", node_of.len(), data.n_rows())));
    }
    let bins_per_feature = data.bins_per_feature();
    let mut hists: Vec<GradHessHistogram> =
        nodes.iter().map(|&n| GradHessHistogram::zeros(n, bins_per_feature)).collect();
    let mut slot_of = vec![usize::MAX; nodes.iter().max().map_or(0, |&m| m + 1)];
    for (slot, &n) in nodes.iter().enumerate() {
        slot_of[n] = slot;
    }

    for &r in rows {
        let slot = slot_of.get(node_of[r]).copied().unwrap_or(usize::MAX);
        if slot == usize::MAX {
            continue;
        }
        let stats = GradStats::new(grad[r], hess[r], 1)?;
        let hist = &mut hists[slot];
        for (f, &bin) in data.row(r).iter().enumerate() {
            if bin as u32 >= bins_per_feature[f] {
                return Err(HistogramError::BinOutOfRange { feature: f, bin, n_bins: bins_per_feature[f] });
            }
            let cell = hist.cell_mut(f, bin as usize);
            cell.g = cell.g.checked_add(stats.g)?;
            cell.h = cell.h.checked_add(stats.h)?;
            cell.count += 1;
        }
    }
    Ok(hists)
}
