use histfed_core::binning::{bin_dataset, BinnedDataset, FeatureMatrix, GlobalBins};
use histfed_core::data::{encode, DatasetManifest, LabeledMatrix};
use histfed_core::federation::{ClientData, Federation};
use histfed_core::loss::mean_loss;
use histfed_core::metrics::{evaluate, Metric};
use histfed_core::sampling::{SamplingConfig, SamplingMethod};
use histfed_core::synthetic::{generate, SyntheticSpec};
use histfed_core::trainer::{early_stop_check, train_centralized, TrainConfig, TrainingOutcome};
use histfed_core::tree::Node;
use histfed_core::{HyperParams, Task};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn dataset(task: Task, n: usize, n_classes: usize, seed: u64) -> LabeledMatrix {
    let mut spec = SyntheticSpec::new(task, n, 5, n_classes, 4, seed);
    spec.missing_rate = 0.05;
    let table = generate(&spec);
    let manifest = DatasetManifest {
        path: PathBuf::new(),
        target_column: "y".into(),
        task,
        split_feature: Some("key".into()),
        drop_columns: vec![],
        categorical_columns: vec![],
        positive_label: None,
    };
    encode(&table, &manifest).unwrap().data
}

fn config(rounds: usize, max_bin: usize, sampling: SamplingConfig, stop: Metric) -> TrainConfig {
    TrainConfig {
        params: HyperParams { rounds, max_depth: 4, max_bin, eta: 0.3, lambda: 0.5, ..HyperParams::default() },
        sampling,
        stop_metric: stop,
        trace_levels: true,
    }
}

/// Splits `data` into `parts` consecutive chunks, using the first 80% of
/// each chunk for training and the rest for validation.
fn clients(data: &LabeledMatrix, parts: usize) -> Vec<ClientData> {
    let n = data.n_rows();
    (0..parts)
        .map(|c| {
            let rows: Vec<usize> = (c * n / parts..(c + 1) * n / parts).collect();
            let cut = rows.len() * 8 / 10;
            ClientData {
                client_id: c,
                train: data.select_rows(&rows[..cut]),
                valid: data.select_rows(&rows[cut..]),
                test: None,
            }
        })
        .collect()
}

fn pooled(parts: &[ClientData], task: Task, n_classes: usize, max_bin: usize) -> (BinnedDataset, BinnedDataset) {
    let stack = |pick: &dyn Fn(&ClientData) -> &LabeledMatrix| {
        let rows: Vec<Vec<f64>> =
            parts.iter().flat_map(|c| (0..pick(c).n_rows()).map(|r| pick(c).features.row(r).to_vec())).collect();
        let labels: Vec<f64> = parts.iter().flat_map(|c| pick(c).labels.clone()).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    };
    let (train_x, train_y) = stack(&|c| &c.train);
    let (valid_x, valid_y) = stack(&|c| &c.valid);
    let bins = GlobalBins::from_matrix(&train_x, max_bin).unwrap();
    (
        bin_dataset(&train_x, &train_y, &bins, task, n_classes).unwrap(),
        bin_dataset(&valid_x, &valid_y, &bins, task, n_classes).unwrap(),
    )
}

fn federated(parts: &[ClientData], task: Task, n_classes: usize, cfg: &TrainConfig) -> Federation {
    let mut fed = Federation::setup(parts, task, n_classes, cfg.clone()).unwrap();
    fed.train().unwrap();
    fed
}

fn assert_matches_centralized(fed: &Federation, central: &TrainingOutcome) {
    assert_eq!(fed.model(), &central.model, "ensembles differ");
    assert_eq!(fed.traces.len(), central.traces.len());
    for (a, b) in fed.traces.iter().zip(&central.traces) {
        assert_eq!((a.round, a.output, a.level), (b.round, b.output, b.level));
        assert_eq!(a.histograms, b.histograms, "round {} output {} level {}", a.round, a.output, a.level);
    }
    let fed_validation: Vec<_> = fed.state.history.iter().map(|r| r.validation.clone()).collect();
    let central_validation: Vec<_> = central.history.iter().map(|r| r.validation.clone()).collect();
    assert_eq!(fed_validation, central_validation);
}

const CASES: [(Task, usize, Metric); 3] =
    [(Task::Regression, 0, Metric::Rmse), (Task::Binary, 2, Metric::Accuracy), (Task::Multiclass, 3, Metric::Accuracy)];

#[test]
fn single_client_without_sampling_equals_centralized() {
    for (task, k, metric) in CASES {
        let data = dataset(task, 400, k, 1);
        let parts = clients(&data, 1);
        let cfg = config(6, 32, SamplingConfig::none(), metric);
        let fed = federated(&parts, task, k, &cfg);
        let (train, valid) = pooled(&parts, task, k, 32);
        let central = train_centralized(&train, &valid, &cfg).unwrap();
        assert_matches_centralized(&fed, &central);
    }
}

#[test]
fn single_client_with_sampling_equals_centralized() {
    for method in [SamplingMethod::Mvs, SamplingMethod::Uniform] {
        for (task, k, metric) in CASES {
            let data = dataset(task, 300, k, 2);
            let parts = clients(&data, 1);
            let cfg = config(5, 16, SamplingConfig::new(method, 30, 77).unwrap(), metric);
            let fed = federated(&parts, task, k, &cfg);
            let (train, valid) = pooled(&parts, task, k, 16);
            let central = train_centralized(&train, &valid, &cfg).unwrap();
            assert_matches_centralized(&fed, &central);
        }
    }
}

#[test]
fn disjoint_halves_merge_to_pooled_histograms() {
    for (task, k, metric) in CASES {
        let data = dataset(task, 500, k, 3);
        let parts = clients(&data, 2);
        let cfg = config(5, 24, SamplingConfig::none(), metric);
        let fed = federated(&parts, task, k, &cfg);
        let (train, valid) = pooled(&parts, task, k, 24);
        let central = train_centralized(&train, &valid, &cfg).unwrap();
        assert_matches_centralized(&fed, &central);
    }
}

#[test]
fn client_count_does_not_change_histograms_or_trees() {
    for (task, k, metric) in CASES {
        let data = dataset(task, 480, k, 4);
        let cfg = config(4, 64, SamplingConfig::none(), metric);
        // the same pooled training rows, spread over 1, 2 and 4 clients
        let base = clients(&data, 4);
        let regroup = |n: usize| -> Vec<ClientData> {
            (0..n)
                .map(|c| {
                    let members = &base[c * 4 / n..(c + 1) * 4 / n];
                    let cat = |pick: &dyn Fn(&ClientData) -> &LabeledMatrix| {
                        let rows: Vec<Vec<f64>> = members
                            .iter()
                            .flat_map(|m| (0..pick(m).n_rows()).map(|r| pick(m).features.row(r).to_vec()))
                            .collect();
                        LabeledMatrix {
                            features: FeatureMatrix::from_rows(&rows).unwrap(),
                            labels: members.iter().flat_map(|m| pick(m).labels.clone()).collect(),
                        }
                    };
                    ClientData { client_id: c, train: cat(&|m| &m.train), valid: cat(&|m| &m.valid), test: None }
                })
                .collect()
        };
        let runs: Vec<Federation> = [1, 2, 4].iter().map(|&n| federated(&regroup(n), task, k, &cfg)).collect();
        for other in &runs[1..] {
            assert_eq!(other.model(), runs[0].model());
            assert_eq!(other.traces.len(), runs[0].traces.len());
            for (a, b) in other.traces.iter().zip(&runs[0].traces) {
                assert_eq!(a.histograms, b.histograms);
            }
        }
    }
}

#[test]
fn clients_cache_the_broadcast_model() {
    let data = dataset(Task::Multiclass, 300, 3, 5);
    let parts = clients(&data, 3);
    let cfg = config(4, 16, SamplingConfig::new(SamplingMethod::Mvs, 50, 1).unwrap(), Metric::Accuracy);
    let mut fed = Federation::setup(&parts, Task::Multiclass, 3, cfg).unwrap();
    for _ in 0..4 {
        fed.run_round().unwrap();
        for c in &fed.clients {
            assert_eq!(c.raw_scores, fed.model().predict_raw_dataset(&c.train).unwrap());
            assert_eq!(c.valid_scores, fed.model().predict_raw_dataset(&c.valid).unwrap());
        }
    }
    assert_eq!(fed.model().trees().len(), 4 * 3);
}

fn trailing_stalls(history: &[f64], metric: Metric) -> usize {
    let mut best: Option<f64> = None;
    let mut stalls = 0;
    let mut max_stalls = 0;
    for &v in history {
        let better = match best {
            None => true,
            Some(b) => {
                if metric.higher_is_better() {
                    v > b
                } else {
                    v < b
                }
            }
        };
        if better {
            best = Some(v);
            stalls = 0;
        } else {
            stalls += 1;
        }
        max_stalls = max_stalls.max(stalls);
    }
    max_stalls
}

proptest! {
    #[test]
    fn early_stop_matches_trailing_scan(
        history in prop::collection::vec(prop::sample::select(vec![0.5, 0.6, 0.7, 0.8]), 0..30),
        k in 1usize..6,
        lower in any::<bool>(),
    ) {
        let metric = if lower { Metric::Rmse } else { Metric::Accuracy };
        // stopping fires at the first round whose stall run reaches K, so
        // "ever reached K" is the same predicate over the whole history
        prop_assert_eq!(early_stop_check(&history, k, metric), trailing_stalls(&history, metric) >= k);
    }
}

#[test]
fn early_stopping_halts_k_rounds_after_the_best_round() {
    let data = dataset(Task::Binary, 300, 2, 6);
    let parts = clients(&data, 2);
    let mut cfg = config(200, 16, SamplingConfig::none(), Metric::Accuracy);
    cfg.params.early_stop = Some(3);
    cfg.params.eta = 1.0;
    cfg.trace_levels = false;
    let fed = federated(&parts, Task::Binary, 2, &cfg);
    assert!(fed.state.stopped_early);
    assert_eq!(fed.state.round, fed.state.best_round() + 3);
    assert_eq!(fed.model().trees().len(), fed.state.round);
    assert_eq!(fed.state.eval_history.len(), fed.state.round);
    assert!(fed.state.stall_count() <= 3);
}

#[test]
fn pooled_metrics_equal_metrics_of_concatenated_predictions() {
    let data = dataset(Task::Binary, 400, 2, 7);
    let parts = clients(&data, 3);
    let mut cfg = config(3, 16, SamplingConfig::none(), Metric::Accuracy);
    cfg.trace_levels = false;
    let fed = federated(&parts, Task::Binary, 2, &cfg);
    let mut labels = Vec::new();
    let mut raw = Vec::new();
    for c in &fed.clients {
        labels.extend_from_slice(c.valid.labels());
        raw.extend(fed.model().predict_raw_dataset(&c.valid).unwrap());
    }
    assert_eq!(fed.evaluate_global().unwrap(), evaluate(Task::Binary, 2, &labels, &raw).unwrap());
}

fn matrix(rows: &[Vec<f64>], labels: &[f64]) -> LabeledMatrix {
    LabeledMatrix { features: FeatureMatrix::from_rows(rows).unwrap(), labels: labels.to_vec() }
}

#[test]
fn base_score_model_on_balanced_labels_scores_one_half() {
    let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
    let labels = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let part = ClientData { client_id: 0, train: matrix(&rows, &labels), valid: matrix(&rows, &labels), test: None };
    let fed =
        Federation::setup(&[part], Task::Binary, 2, config(1, 8, SamplingConfig::none(), Metric::Accuracy)).unwrap();
    assert_eq!(fed.model().base_score(), &[0.0]);
    assert_eq!(fed.evaluate_global().unwrap().accuracy, Some(0.5));
}

#[test]
fn memorized_training_set_scores_perfectly() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
    let labels: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) % 2) as f64).collect();
    let part = ClientData { client_id: 0, train: matrix(&rows, &labels), valid: matrix(&rows, &labels), test: None };
    let mut cfg = config(30, 64, SamplingConfig::none(), Metric::Accuracy);
    cfg.params.eta = 1.0;
    cfg.params.lambda = 0.0;
    let fed = federated(&[part], Task::Binary, 2, &cfg);
    assert_eq!(fed.evaluate_global().unwrap().accuracy, Some(1.0));
}

#[test]
fn single_client_local_vs_global_is_the_direct_difference() {
    let data = dataset(Task::Regression, 300, 0, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut idx: Vec<usize> = (0..300).collect();
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    let part = ClientData {
        client_id: 0,
        train: data.select_rows(&idx[..210]),
        valid: data.select_rows(&idx[210..270]),
        test: Some(data.select_rows(&idx[270..])),
    };
    let mut cfg = config(10, 32, SamplingConfig::none(), Metric::Rmse);
    cfg.trace_levels = false;
    let fed = federated(&[part], Task::Regression, 0, &cfg);
    let c = &fed.clients[0];
    let test = c.test.as_ref().unwrap();
    let local = evaluate(Task::Regression, 0, test.labels(), &fed.model().predict_raw_dataset(test).unwrap()).unwrap();
    let global =
        evaluate(Task::Regression, 0, c.valid.labels(), &fed.model().predict_raw_dataset(&c.valid).unwrap()).unwrap();
    let deltas = fed.evaluate_local_vs_global().unwrap();
    let rmse = deltas.iter().find(|d| d.metric == Metric::Rmse).unwrap();
    assert_eq!(rmse.delta, Some(global.rmse.unwrap() - local.rmse.unwrap()));
    let r2 = deltas.iter().find(|d| d.metric == Metric::R2).unwrap();
    assert_eq!(r2.delta, Some(local.r2.unwrap() - global.r2.unwrap()));
}

/// Training loss plus the L2 penalty of every leaf weight (as applied,
/// i.e. scaled by the learning rate).
fn regularized_objective(outcome_model: &histfed_core::Ensemble, train: &BinnedDataset, lambda: f64) -> f64 {
    let raw = outcome_model.predict_raw_dataset(train).unwrap();
    let k = outcome_model.n_outputs();
    let loss = mean_loss(train.task(), train.labels(), &raw, k) * train.n_rows() as f64;
    let eta = outcome_model.eta();
    let penalty: f64 = outcome_model
        .trees()
        .iter()
        .flat_map(|t| t.nodes().iter())
        .map(|n| match n {
            Node::Leaf { weight } => 0.5 * lambda * (eta * weight).powi(2),
            Node::Split { .. } => 0.0,
        })
        .sum();
    loss + penalty
}

#[test]
fn regularized_training_objective_never_increases() {
    for (task, k, metric) in CASES {
        for eta in [0.05, 0.1] {
            let data = dataset(task, 300, k, 9);
            let parts = clients(&data, 1);
            let (train, valid) = pooled(&parts, task, k, 32);
            let mut cfg = config(25, 32, SamplingConfig::none(), metric);
            cfg.params.eta = eta;
            cfg.params.lambda = 1.0;
            cfg.trace_levels = false;
            let outcome = train_centralized(&train, &valid, &cfg).unwrap();
            let mut model = outcome.model.clone();
            let mut values = Vec::new();
            for r in 0..=outcome.model.n_rounds() {
                model.clone_from(&outcome.model);
                model.truncate_rounds(r);
                values.push(regularized_objective(&model, &train, 1.0));
            }
            for w in values.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{task} eta {eta}: objective rose {} -> {}", w[0], w[1]);
            }
        }
    }
}
