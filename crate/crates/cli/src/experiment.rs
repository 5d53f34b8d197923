//! Dataset preparation and single-run execution shared by every command.

use std::time::Instant;

use histfed_core::binning::{bin_dataset, GlobalBins};
use histfed_core::data::{
    dirichlet_groups, encode, key_groups, load_csv, subsample_clients, DatasetManifest, LabeledMatrix, Schema,
};
use histfed_core::ensemble::Ensemble;
use histfed_core::federation::{clients_from_groups, ClientData, ClientDelta, Federation};
use histfed_core::metrics::Metric;
use histfed_core::sampling::{SamplingConfig, SamplingMethod};
use histfed_core::seed::{derive, run_seed};
use histfed_core::trainer::{train_centralized, RoundRecord, TrainConfig};
use histfed_core::{FeatureMatrix, HyperParams, Task};

use crate::config::{ExperimentConfig, Partition};
use crate::error::{CliError, Result};

// sub-streams below a run seed
const STREAM_PARTITION: u64 = 1;
const STREAM_SUBSAMPLE: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_SAMPLING: u64 = 4;

/// The encoded table plus its natural partition, loaded once per command.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: DatasetManifest,
    pub schema: Schema,
    pub data: LabeledMatrix,
    /// Natural key groups for `by_key`; `None` when groups are redrawn per run.
    pub key_groups: Option<Vec<(String, Vec<usize>)>>,
    pub fingerprint: String,
}

impl Prepared {
    pub fn task(&self) -> Task {
        self.schema.task
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let manifest = config.load_manifest()?;
    let fingerprint = config.fingerprint(&manifest)?;
    let table = load_csv(&manifest)?;
    let encoded = encode(&table, &manifest)?;
    let key_groups = match config.partition {
        Partition::ByKey => {
            let feature = manifest.split_feature.as_deref().ok_or_else(|| {
                CliError::config(format!(
                    "{} has no split_feature; use a dirichlet partition",
                    config.manifest.display()
                ))
            })?;
            Some(key_groups(&table, feature)?.into_iter().map(|(k, rows)| (k.to_string(), rows)).collect())
        }
        Partition::Dirichlet { .. } => {
            if !manifest.task.is_classification() {
                return Err(CliError::config("dirichlet partitioning needs a classification dataset"));
            }
            None
        }
    };
    Ok(Prepared { manifest, schema: encoded.schema, data: encoded.data, key_groups, fingerprint })
}

/// Everything one run trains on.
#[derive(Debug, Clone)]
pub struct RunData {
    pub run: usize,
    pub seed: u64,
    /// Name of each client, in client id order.
    pub client_names: Vec<String>,
    pub clients: Vec<ClientData>,
}

impl RunData {
    pub fn sampling(&self, method: SamplingMethod, fraction: u32) -> Result<SamplingConfig> {
        SamplingConfig::new(method, fraction, derive(self.seed, &[STREAM_SAMPLING]))
            .map_err(|e| CliError::config(e.to_string()))
    }

    /// Every client's parts pooled in client order, for the centralized baseline.
    pub fn pooled(&self) -> Result<ClientData> {
        let join = |parts: Vec<&LabeledMatrix>| -> Result<LabeledMatrix> {
            let n_features = parts.first().map_or(0, |p| p.features.n_features());
            let mut values = Vec::new();
            let mut labels = Vec::new();
            for p in &parts {
                for r in 0..p.n_rows() {
                    values.extend_from_slice(p.features.row(r));
                }
                labels.extend_from_slice(&p.labels);
            }
            Ok(LabeledMatrix { features: FeatureMatrix::new(labels.len(), n_features, values)?, labels })
        };
        let tests: Option<Vec<&LabeledMatrix>> = self.clients.iter().map(|c| c.test.as_ref()).collect();
        Ok(ClientData {
            client_id: 0,
            train: join(self.clients.iter().map(|c| &c.train).collect())?,
            valid: join(self.clients.iter().map(|c| &c.valid).collect())?,
            test: tests.map(join).transpose()?,
        })
    }
}

/// Partitions, subsamples and splits the data for run `run`. All
/// randomness derives from the master seed and the run index.
pub fn run_data(prepared: &Prepared, config: &ExperimentConfig, run: usize) -> Result<RunData> {
    let seed = run_seed(config.seed, run);
    let named: Vec<(String, Vec<usize>)> = match (&prepared.key_groups, &config.partition) {
        (Some(groups), _) => groups.clone(),
        (None, Partition::Dirichlet { alpha, n_clients }) => {
            let classes: Vec<usize> = prepared.data.labels.iter().map(|&y| y as usize).collect();
            dirichlet_groups(&classes, *n_clients, *alpha, derive(seed, &[STREAM_PARTITION]))?
                .into_iter()
                .enumerate()
                .map(|(i, rows)| (format!("client{i:02}"), rows))
                .collect()
        }
        (None, Partition::ByKey) => unreachable!("prepare always groups by key"),
    };
    let named = match config.max_clients {
        Some(max) => subsample_clients(&named, max, derive(seed, &[STREAM_SUBSAMPLE])),
        None => named,
    };
    let groups: Vec<Vec<usize>> = named.iter().map(|(_, rows)| rows.clone()).collect();
    let clients = clients_from_groups(&prepared.data, &groups, config.split, derive(seed, &[STREAM_SPLIT]))
        .map_err(|e| CliError::from(e).context(format!("run {run}: splitting clients")))?;
    Ok(RunData { run, seed, client_names: named.into_iter().map(|(k, _)| k).collect(), clients })
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<RoundRecord>,
    /// `(round, wall milliseconds)`. The centralized trainer runs all
    /// rounds in one call and reports a single entry without a round.
    pub timings_ms: Vec<(Option<usize>, f64)>,
    pub stopped_early: bool,
    pub best_round: usize,
    pub model: Ensemble,
    pub bins: GlobalBins,
    pub params: HyperParams,
    pub deltas: Vec<ClientDelta>,
}

fn train_config(task: Task, params: &HyperParams, sampling: SamplingConfig) -> TrainConfig {
    TrainConfig { params: params.clone(), sampling, stop_metric: Metric::primary(task), trace_levels: false }
}

/// Federated training of one run.
pub fn run_federated(
    prepared: &Prepared,
    data: &RunData,
    params: &HyperParams,
    method: SamplingMethod,
) -> Result<RunOutcome> {
    let sampling = data.sampling(method, params.sampling_fraction)?;
    let config = train_config(prepared.task(), params, sampling);
    let mut fed = Federation::setup(&data.clients, prepared.task(), prepared.n_classes(), config)?;
    let mut timings_ms = Vec::new();
    while !fed.is_finished() {
        let start = Instant::now();
        let round = fed.run_round()?.round;
        timings_ms.push((Some(round), start.elapsed().as_secs_f64() * 1e3));
    }
    let has_tests = data.clients.iter().all(|c| c.test.is_some());
    let deltas = if has_tests { fed.evaluate_local_vs_global()? } else { Vec::new() };
    Ok(RunOutcome {
        best_round: fed.state.best_round(),
        stopped_early: fed.state.stopped_early,
        history: fed.state.history,
        timings_ms,
        model: fed.state.model,
        bins: fed.state.global_bins,
        params: params.clone(),
        deltas,
    })
}

/// Centralized training on the run's pooled client splits.
pub fn run_centralized(
    prepared: &Prepared,
    data: &RunData,
    params: &HyperParams,
    method: SamplingMethod,
) -> Result<RunOutcome> {
    let sampling = data.sampling(method, params.sampling_fraction)?;
    let config = train_config(prepared.task(), params, sampling);
    let pooled = data.pooled()?;
    let (task, k) = (prepared.task(), prepared.n_classes());
    let bins = GlobalBins::from_matrix(&pooled.train.features, params.max_bin)?;
    let train = bin_dataset(&pooled.train.features, &pooled.train.labels, &bins, task, k)?;
    let valid = bin_dataset(&pooled.valid.features, &pooled.valid.labels, &bins, task, k)?;
    let start = Instant::now();
    let outcome = train_centralized(&train, &valid, &config)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    Ok(RunOutcome {
        best_round: outcome.stopper.best_round,
        stopped_early: outcome.stopped_early,
        history: outcome.history,
        timings_ms: vec![(None, elapsed)],
        model: outcome.model,
        bins,
        params: params.clone(),
        deltas: Vec::new(),
    })
}

/// Which trainer a command drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Federated,
    Centralized,
}

pub fn run_one(
    mode: Mode,
    prepared: &Prepared,
    data: &RunData,
    params: &HyperParams,
    method: SamplingMethod,
) -> Result<RunOutcome> {
    let out = match mode {
        Mode::Federated => run_federated(prepared, data, params, method),
        Mode::Centralized => run_centralized(prepared, data, params, method),
    };
    out.map_err(|e| e.context(format!("run {}", data.run)))
}
