//! Histogram-based gradient boosted decision trees with a simulated
//! horizontal-federated trainer.
//!
//! Clients hold disjoint row sets over a shared feature space. Training
//! proceeds in two phases:
//!
//! 1. **Setup.** Every client summarizes each feature column into a
//!    [`binning::FeatureSketch`]; the aggregator merges them into global bin
//!    edges ([`binning::GlobalBins`]) and derives a base score from
//!    client-reported label statistics.
//! 2. **Rounds.** The aggregator broadcasts the current ensemble, clients
//!    sample rows ([`sampling`]), compute gradients and hessians, and return
//!    per-node gradient histograms one tree level at a time. The aggregator
//!    merges them in ascending client order and grows the next tree.
//!
//! Histogram sums are accumulated in fixed point ([`histogram::FixedSum`]) so
//! that merging is associative: the same rows split across any number of
//! clients produce bit-identical merged histograms and therefore identical
//! trees.

pub mod binning;
pub mod data;
pub mod ensemble;
pub mod federation;
pub mod histogram;
pub mod loss;
pub mod metrics;
pub mod model_io;
pub mod params;
pub mod sampling;
pub mod seed;
pub mod split;
pub mod synthetic;
pub mod trainer;
pub mod tree;

pub use binning::{BinnedDataset, FeatureMatrix, FeatureSketch, GlobalBins};
pub use ensemble::Ensemble;
pub use params::{HyperParams, Task};
pub use sampling::{SamplingConfig, SamplingMethod};
pub use tree::Tree;
