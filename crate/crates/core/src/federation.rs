//! In-process simulation of horizontal federated boosting.
//!
//! An aggregator and a set of clients exchange explicit message values:
//! at setup each client sends per-feature sketches and label statistics,
//! and every tree level it sends one gradient histogram per frontier node.
//! Client steps run concurrently; the aggregator folds their messages in
//! ascending `client_id` order, and because histogram sums are fixed-point
//! the merged result does not depend on how rows are spread over clients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{
    bin_dataset, merge_sketches, sketch_column, BinnedDataset, BinningError, FeatureSketch, GlobalBins,
};
use crate::data::{split_indices, DataError, LabeledMatrix, SplitScheme};
use crate::ensemble::Ensemble;
use crate::histogram::{build_grad_histograms, GradHessHistogram};
use crate::loss::{compute_grad_hess, row_loss};
use crate::metrics::{evaluate, Metric, MetricError, MetricRecord};
use crate::params::Task;
use crate::sampling::{select, SamplingConfig};
use crate::trainer::{base_score, EarlyStopper, LabelStats, LevelTrace, RoundRecord, TrainConfig, TrainError};
use crate::tree::{route_rows, SplitDecision, TreeGrower};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FederationError {
    #[error("a federation needs at least one client")]
    NoClients,
    #[error("client id {0} is used twice")]
    DuplicateClient(usize),
    #[error("inconsistent schema: {0}")]
    Schema(String),
    #[error("client {client_id} failed: {message}")]
    Client { client_id: usize, message: String },
    #[error("protocol violation by client {client_id}: {message}")]
    Protocol { client_id: usize, message: String },
    #[error("the pooled validation set is empty")]
    EmptyValidation,
    #[error("client {0} holds no local test split")]
    MissingTest(usize),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Raw data one client starts with.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub client_id: usize,
    pub train: LabeledMatrix,
    pub valid: LabeledMatrix,
    pub test: Option<LabeledMatrix>,
}

/// Cuts every row group into a client's train / validation / test parts.
/// Client `i` gets id `i` and a split seeded by `seed` and `i`.
pub fn clients_from_groups(
    data: &LabeledMatrix,
    groups: &[Vec<usize>],
    scheme: SplitScheme,
    seed: u64,
) -> Result<Vec<ClientData>, DataError> {
    groups
        .iter()
        .enumerate()
        .map(|(client_id, rows)| {
            let part = data.select_rows(rows);
            let idx = split_indices(part.n_rows(), scheme, crate::seed::derive(seed, &[client_id as u64]))?;
            Ok(ClientData {
                client_id,
                train: part.select_rows(&idx.train),
                valid: part.select_rows(&idx.valid),
                test: idx.test.map(|t| part.select_rows(&t)),
            })
        })
        .collect()
}

/// Sent once by every client before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupMessage {
    pub client_id: usize,
    pub n_features: usize,
    pub sketches: Vec<FeatureSketch>,
    pub label_stats: LabelStats,
}

impl ClientData {
    pub fn setup_message(
        &self,
        max_bins: usize,
        task: Task,
        n_classes: usize,
    ) -> Result<SetupMessage, FederationError> {
        let x = &self.train.features;
        let sketches =
            (0..x.n_features()).map(|f| sketch_column(f, &x.column(f), max_bins)).collect::<Result<Vec<_>, _>>()?;
        let label_stats = LabelStats::from_labels(task, n_classes, &self.train.labels)
            .map_err(|e| FederationError::Client { client_id: self.client_id, message: e.to_string() })?;
        Ok(SetupMessage { client_id: self.client_id, n_features: x.n_features(), sketches, label_stats })
    }
}

/// Aggregator side of setup: merges the sketches feature by feature and
/// derives the base score from the pooled label statistics.
pub fn setup(
    messages: &[SetupMessage],
    max_bins: usize,
    task: Task,
    n_classes: usize,
) -> Result<(GlobalBins, Vec<f64>), FederationError> {
    let mut ordered: Vec<&SetupMessage> = messages.iter().collect();
    ordered.sort_by_key(|m| m.client_id);
    let first = ordered.first().ok_or(FederationError::NoClients)?;
    let n_features = first.n_features;
    for pair in ordered.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(FederationError::DuplicateClient(pair[0].client_id));
        }
    }
    for m in &ordered {
        if m.n_features != n_features || m.sketches.len() != n_features {
            return Err(FederationError::Schema(format!(
                "client {} reports {} features, expected {n_features}",
                m.client_id, m.n_features
            )));
        }
    }
    let mut edges = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let sketches: Vec<FeatureSketch> = ordered.iter().map(|m| m.sketches[f].clone()).collect();
        edges.push(merge_sketches(&sketches, max_bins)?);
    }
    let mut stats = LabelStats::default();
    for m in &ordered {
        stats.merge(&m.label_stats).map_err(TrainError::from)?;
    }
    let base = base_score(task, n_classes, &stats)?;
    Ok((GlobalBins::new(edges, max_bins)?, base))
}

/// What the aggregator announces before each tree level: the nodes it
/// wants histograms for and the splits decided at the previous level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRequest {
    pub round: usize,
    pub output: usize,
    pub level: usize,
    pub frontier: Vec<usize>,
    pub splits: Vec<SplitDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub client_id: usize,
    pub histograms: Vec<GradHessHistogram>,
    pub sampled_count: usize,
}

#[derive(Debug, Clone)]
struct RoundWork {
    round: usize,
    rows: Vec<usize>,
    grad: Vec<Vec<f64>>,
    hess: Vec<Vec<f64>>,
    output: usize,
    node_of: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub train: BinnedDataset,
    pub valid: BinnedDataset,
    pub test: Option<BinnedDataset>,
    /// Row-major `n_rows × n_outputs` raw scores of the training rows.
    pub raw_scores: Vec<f64>,
    pub valid_scores: Vec<f64>,
    pub sampling: SamplingConfig,
    synced_trees: usize,
    work: Option<RoundWork>,
    fail_at_round: Option<usize>,
}

impl ClientState {
    pub fn new(
        data: &ClientData,
        bins: &GlobalBins,
        task: Task,
        n_classes: usize,
        base: &[f64],
        sampling: SamplingConfig,
    ) -> Result<Self, FederationError> {
        let bin = |m: &LabeledMatrix| bin_dataset(&m.features, &m.labels, bins, task, n_classes);
        let train = bin(&data.train)?;
        let valid = bin(&data.valid)?;
        let test = data.test.as_ref().map(bin).transpose()?;
        let raw_scores = base.iter().copied().cycle().take(train.n_rows() * base.len()).collect();
        let valid_scores = base.iter().copied().cycle().take(valid.n_rows() * base.len()).collect();
        Ok(Self {
            client_id: data.client_id,
            train,
            valid,
            test,
            raw_scores,
            valid_scores,
            sampling,
            synced_trees: 0,
            work: None,
            fail_at_round: None,
        })
    }

    /// Simulates a crash: the client errors out when asked to start `round`.
    pub fn inject_failure(&mut self, round: usize) {
        self.fail_at_round = Some(round);
    }

    fn fail(&self, message: impl ToString) -> FederationError {
        FederationError::Client { client_id: self.client_id, message: message.to_string() }
    }

    /// Brings the cached raw scores up to date with the broadcast model.
    pub fn sync(&mut self, model: &Ensemble) {
        let k = model.n_outputs();
        let first = self.synced_trees;
        for i in 0..self.train.n_rows() {
            model.accumulate_from(first, self.train.row(i), &mut self.raw_scores[i * k..(i + 1) * k]);
        }
        for i in 0..self.valid.n_rows() {
            model.accumulate_from(first, self.valid.row(i), &mut self.valid_scores[i * k..(i + 1) * k]);
        }
        self.synced_trees = model.trees().len();
    }

    /// Receives the model, samples rows and computes their gradients.
    /// Returns the number of sampled rows.
    pub fn begin_round(&mut self, model: &Ensemble, round: usize, lambda: f64) -> Result<usize, FederationError> {
        if self.fail_at_round == Some(round) {
            return Err(self.fail("simulated failure"));
        }
        self.sync(model);
        let task = model.task();
        let gh = compute_grad_hess(task, model.n_classes(), self.train.labels(), &self.raw_scores)
            .map_err(|e| self.fail(e))?;
        let rows = select(&self.sampling, self.train.n_rows(), Some(&gh), lambda, round, self.client_id as u64)
            .map_err(|e| self.fail(e))?;
        let (grad, hess) = (0..gh.n_outputs).map(|c| gh.output(c)).unzip();
        let n = rows.len();
        self.work =
            Some(RoundWork { round, rows, grad, hess, output: usize::MAX, node_of: vec![0; self.train.n_rows()] });
        Ok(n)
    }

    /// Routes the sampled rows through last level's splits and builds the
    /// histograms of the requested nodes.
    pub fn level_message(&mut self, request: &LevelRequest) -> Result<RoundMessage, FederationError> {
        let client_id = self.client_id;
        let work = self.work.as_mut().filter(|w| w.round == request.round).ok_or_else(|| FederationError::Client {
            client_id,
            message: format!("round {} was never started", request.round),
        })?;
        if work.output != request.output {
            work.output = request.output;
            work.node_of.iter_mut().for_each(|n| *n = 0);
        }
        route_rows(&self.train, &mut work.node_of, &work.rows, &request.splits);
        let c = request.output;
        let histograms = build_grad_histograms(
            &self.train,
            &work.grad[c],
            &work.hess[c],
            &work.node_of,
            &work.rows,
            &request.frontier,
        )
        .map_err(|e| FederationError::Client { client_id, message: e.to_string() })?;
        Ok(RoundMessage { client_id, histograms, sampled_count: work.rows.len() })
    }
}

/// Aggregator bookkeeping.
#[derive(Debug, Clone)]
pub struct FederationState {
    pub model: Ensemble,
    /// Completed rounds.
    pub round: usize,
    /// Global validation value of the stopping metric after each round.
    pub eval_history: Vec<f64>,
    pub stopper: EarlyStopper,
    pub global_bins: GlobalBins,
    pub history: Vec<RoundRecord>,
    pub stopped_early: bool,
}

impl FederationState {
    pub fn best_round(&self) -> usize {
        self.stopper.best_round
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.stopper.best_value
    }

    pub fn stall_count(&self) -> usize {
        self.stopper.stall_count
    }
}

/// Sign-adjusted difference between a client's local test score and the
/// pooled validation score of the same model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDelta {
    pub client_id: usize,
    pub metric: Metric,
    pub local: Option<f64>,
    pub global: Option<f64>,
    /// `local - global`, negated for lower-is-better metrics so that a
    /// positive delta always means the local score is better.
    pub delta: Option<f64>,
}

pub fn metric_delta(metric: Metric, local: f64, global: f64) -> f64 {
    if metric.higher_is_better() {
        local - global
    } else {
        global - local
    }
}

/// Merges the messages of one level, in ascending client order.
fn merge_level(request: &LevelRequest, messages: &[RoundMessage]) -> Result<Vec<GradHessHistogram>, FederationError> {
    let mut merged: Option<Vec<GradHessHistogram>> = None;
    for msg in messages {
        let protocol = |message: String| FederationError::Protocol { client_id: msg.client_id, message };
        let ids: Vec<usize> = msg.histograms.iter().map(|h| h.node_id).collect();
        if ids != request.frontier {
            return Err(protocol(format!("sent histograms for nodes {ids:?}, expected {:?}", request.frontier)));
        }
        match merged.as_mut() {
            None => merged = Some(msg.histograms.clone()),
            Some(acc) => {
                for (a, h) in acc.iter_mut().zip(&msg.histograms) {
                    a.merge(h).map_err(|e| protocol(e.to_string()))?;
                }
            }
        }
    }
    Ok(merged.unwrap_or_default())
}

pub struct Federation {
    pub config: TrainConfig,
    pub clients: Vec<ClientState>,
    pub state: FederationState,
    /// Merged histograms per level, filled when `config.trace_levels` is set.
    pub traces: Vec<LevelTrace>,
}

impl Federation {
    /// Runs the setup exchange and bins every client's data with the
    /// merged edges.
    pub fn setup(
        data: &[ClientData],
        task: Task,
        n_classes: usize,
        config: TrainConfig,
    ) -> Result<Self, FederationError> {
        config.params.validate().map_err(TrainError::from)?;
        let messages = data
            .par_iter()
            .map(|c| c.setup_message(config.params.max_bin, task, n_classes))
            .collect::<Result<Vec<_>, _>>()?;
        let (global_bins, base) = setup(&messages, config.params.max_bin, task, n_classes)?;
        let mut clients = data
            .par_iter()
            .map(|c| ClientState::new(c, &global_bins, task, n_classes, &base, config.sampling))
            .collect::<Result<Vec<_>, _>>()?;
        clients.sort_by_key(|c| c.client_id);
        let model = Ensemble::new(task, n_classes, global_bins.n_features(), base, config.params.eta)
            .map_err(TrainError::from)?;
        let state = FederationState {
            model,
            round: 0,
            eval_history: Vec::new(),
            stopper: EarlyStopper::new(config.stop_metric, config.params.early_stop),
            global_bins,
            history: Vec::new(),
            stopped_early: false,
        };
        Ok(Self { config, clients, state, traces: Vec::new() })
    }

    pub fn model(&self) -> &Ensemble {
        &self.state.model
    }

    /// Whether another round may run.
    pub fn is_finished(&self) -> bool {
        self.state.stopped_early || self.state.round >= self.config.params.rounds
    }

    /// One boosting round. On error nothing is committed: the model, the
    /// round counter and the histories are unchanged.
    pub fn run_round(&mut self) -> Result<&RoundRecord, FederationError> {
        let round = self.state.round + 1;
        let lambda = self.config.params.lambda;
        let model = &self.state.model;
        let sampled = self
            .clients
            .par_iter_mut()
            .map(|c| c.begin_round(model, round, lambda).map(|n| (c.client_id, n)))
            .collect::<Result<Vec<_>, _>>()?;

        let mut trees = Vec::with_capacity(model.n_outputs());
        let mut traces = Vec::new();
        for output in 0..model.n_outputs() {
            let mut grower = TreeGrower::new(self.config.grow_params());
            let mut splits = Vec::new();
            let mut prev = Vec::new();
            while !grower.is_done() {
                let request = LevelRequest {
                    round,
                    output,
                    level: grower.depth(),
                    frontier: grower.nodes_to_build(),
                    splits: std::mem::take(&mut splits),
                };
                let messages =
                    self.clients.par_iter_mut().map(|c| c.level_message(&request)).collect::<Result<Vec<_>, _>>()?;
                let merged = merge_level(&request, &messages)?;
                prev = grower.complete_level(merged, &prev).map_err(TrainError::from)?;
                splits = grower.apply_level(&prev).map_err(TrainError::from)?;
                if self.config.trace_levels {
                    traces.push(LevelTrace { round, output, level: request.level, histograms: prev.clone() });
                }
            }
            trees.push(grower.finish().map_err(TrainError::from)?);
        }

        self.state.model.push_round(trees).map_err(TrainError::from)?;
        let model = &self.state.model;
        self.clients.par_iter_mut().for_each(|c| c.sync(model));
        self.traces.extend(traces);

        let validation = self.evaluate_global()?;
        let value = validation.get(self.config.stop_metric).unwrap_or(f64::NAN);
        let record = RoundRecord { round, validation, train_loss: self.train_loss(), sampled };
        self.state.round = round;
        self.state.eval_history.push(value);
        if self.state.stopper.update(value) {
            self.state.stopped_early = true;
        }
        self.state.history.push(record);
        Ok(self.state.history.last().unwrap())
    }

    /// Runs rounds until the round budget or early stopping ends training.
    pub fn train(&mut self) -> Result<(), FederationError> {
        while !self.is_finished() {
            self.run_round()?;
        }
        Ok(())
    }

    /// Mean training loss over every client's rows.
    pub fn train_loss(&self) -> f64 {
        let k = self.state.model.n_outputs();
        let task = self.state.model.task();
        let mut total = 0.0;
        let mut n = 0usize;
        for c in &self.clients {
            for (i, &y) in c.train.labels().iter().enumerate() {
                total += row_loss(task, y, &c.raw_scores[i * k..(i + 1) * k]);
            }
            n += c.train.n_rows();
        }
        total / n as f64
    }

    /// Metrics of the current model on the union of the clients'
    /// validation sets, pooled in client order.
    pub fn evaluate_global(&self) -> Result<MetricRecord, FederationError> {
        let mut labels = Vec::new();
        let mut raw = Vec::new();
        for c in &self.clients {
            labels.extend_from_slice(c.valid.labels());
            raw.extend_from_slice(&c.valid_scores);
        }
        if labels.is_empty() {
            return Err(FederationError::EmptyValidation);
        }
        let model = &self.state.model;
        Ok(evaluate(model.task(), model.n_classes(), &labels, &raw)?)
    }

    /// Per client and reported metric: local test score against the pooled
    /// validation score.
    pub fn evaluate_local_vs_global(&self) -> Result<Vec<ClientDelta>, FederationError> {
        let model = &self.state.model;
        let global = self.evaluate_global()?;
        let mut out = Vec::new();
        for c in &self.clients {
            let test = c.test.as_ref().ok_or(FederationError::MissingTest(c.client_id))?;
            // tiny clients can end up with an empty test split; their local scores are absent
            let local = if test.n_rows() == 0 {
                None
            } else {
                let raw = model.predict_raw_dataset(test).map_err(TrainError::from)?;
                Some(evaluate(model.task(), model.n_classes(), test.labels(), &raw)?)
            };
            for &metric in Metric::reported(model.task()) {
                let (l, g) = (local.as_ref().and_then(|r| r.get(metric)), global.get(metric));
                let delta = l.zip(g).map(|(l, g)| metric_delta(metric, l, g));
                out.push(ClientDelta { client_id: c.client_id, metric, local: l, global: g, delta });
            }
        }
        Ok(out)
    }
}
