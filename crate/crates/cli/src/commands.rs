//! The subcommands, as library functions returning their results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use histfed_core::data::{read_csv, write_csv, DatasetManifest};
use histfed_core::ensemble::Prediction;
use histfed_core::metrics::{evaluate, Metric, MetricRecord};
use histfed_core::model_io::ModelFile;
use histfed_core::sampling::SamplingConfig;
use histfed_core::synthetic::{generate, SyntheticSpec};
use histfed_core::{HyperParams, Task};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Partition};
use crate::error::{CliError, Result};
use crate::experiment::{prepare, run_data, run_federated, run_one, Mode, Prepared, RunData};
use crate::summary::{delta_rows, run_score, write_file, ArtifactWriter, MetricStats, RunScore, RunSummary};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const BEST_CONFIG_FILE: &str = "best_config.toml";
pub const BOXPLOT_FILE: &str = "boxplot.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const DELTAS_FILE: &str = "deltas.csv";

pub fn sampling_label(config: &ExperimentConfig) -> String {
    SamplingConfig::new(config.sampling, config.params.sampling_fraction, 0)
        .map(|s| s.label())
        .unwrap_or_else(|_| config.sampling.to_string())
}

// ------------------------------------------------------------------ prepare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub name: String,
    pub rows: usize,
    pub train: usize,
    pub valid: usize,
    pub test: Option<usize>,
    /// Training rows per class, for classification tasks.
    pub class_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareReport {
    pub dataset: String,
    pub task: Task,
    pub n_rows: usize,
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub partition: Partition,
    /// Clients of the first run.
    pub clients: Vec<ClientReport>,
}

pub fn cmd_prepare(config: &ExperimentConfig) -> Result<PrepareReport> {
    let prepared = prepare(config)?;
    let data = run_data(&prepared, config, 0)?;
    let n_classes = prepared.n_classes();
    let clients = data
        .clients
        .iter()
        .zip(&data.client_names)
        .map(|(c, name)| {
            let test = c.test.as_ref().map(|t| t.n_rows());
            let class_counts = prepared.task().is_classification().then(|| {
                let mut counts = vec![0usize; n_classes];
                for &y in &c.train.labels {
                    counts[y as usize] += 1;
                }
                counts
            });
            ClientReport {
                name: name.clone(),
                rows: c.train.n_rows() + c.valid.n_rows() + test.unwrap_or(0),
                train: c.train.n_rows(),
                valid: c.valid.n_rows(),
                test,
                class_counts,
            }
        })
        .collect();
    Ok(PrepareReport {
        dataset: config.dataset_name(),
        task: prepared.task(),
        n_rows: prepared.data.n_rows(),
        features: prepared.schema.feature_names.clone(),
        classes: prepared.schema.classes.clone(),
        partition: config.partition.clone(),
        clients,
    })
}

// ------------------------------------------------------- train and baseline

fn run_experiment(config: &ExperimentConfig, mode: Mode) -> Result<RunSummary> {
    let prepared = prepare(config)?;
    let mut writer = ArtifactWriter::create(&config.output, &config.to_toml())?;
    let mut runs = Vec::with_capacity(config.n_runs);
    let mut deltas = Vec::new();
    for run in 0..config.n_runs {
        let data = run_data(&prepared, config, run)?;
        let outcome = run_one(mode, &prepared, &data, &config.params, config.sampling)?;
        writer.record_run(&prepared, &data, &outcome)?;
        runs.push(run_score(&data, &outcome, prepared.task()));
        deltas.extend(delta_rows(&data, &outcome));
    }
    let (command, label) = match mode {
        Mode::Federated => ("train", sampling_label(config)),
        Mode::Centralized => ("baseline", "Central".to_string()),
    };
    let summary = RunSummary::new(command, label, config.dataset_name(), &prepared, runs, deltas);
    writer.finish(&summary)?;
    Ok(summary)
}

/// Federated runs; writes the round log, timings, models and summary.
pub fn cmd_train(config: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment(config, Mode::Federated)
}

/// Centralized runs on the pooled client splits of every run.
pub fn cmd_baseline(config: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment(config, Mode::Centralized)
}

// -------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Position in grid order.
    pub point: usize,
    pub params: HyperParams,
    pub stats: BTreeMap<Metric, MetricStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub primary_metric: Metric,
    /// Best first; ties keep grid order.
    pub ranked: Vec<SweepRow>,
}

impl SweepResult {
    pub fn best(&self) -> &SweepRow {
        &self.ranked[0]
    }
}

fn score_point(
    prepared: &Prepared,
    runs: &[RunData],
    params: &HyperParams,
    config: &ExperimentConfig,
) -> Result<BTreeMap<Metric, MetricStats>> {
    let scores: Vec<RunScore> = runs
        .iter()
        .map(|data| {
            run_federated(prepared, data, params, config.sampling)
                .map(|o| run_score(data, &o, prepared.task()))
                .map_err(|e| e.context(format!("run {}", data.run)))
        })
        .collect::<Result<_>>()?;
    let mut stats = BTreeMap::new();
    for &m in Metric::reported(prepared.task()) {
        let values: Vec<f64> = scores.iter().filter_map(|s| s.best.get(&m).copied()).collect();
        if values.len() == scores.len() {
            stats.insert(m, MetricStats::from_values(values));
        }
    }
    Ok(stats)
}

/// Ranks by mean best-round primary metric; ties keep grid order.
pub fn rank_rows(mut rows: Vec<SweepRow>, metric: Metric) -> Vec<SweepRow> {
    let key = |r: &SweepRow| r.stats.get(&metric).map_or(f64::NAN, |s| s.mean);
    rows.sort_by(|a, b| {
        let (x, y) = (key(a), key(b));
        let ord = if metric.higher_is_better() { y.total_cmp(&x) } else { x.total_cmp(&y) };
        // NaN means the metric was unavailable: always last
        match (x.is_nan(), y.is_nan()) {
            (false, true) => std::cmp::Ordering::Less,
            (true, false) => std::cmp::Ordering::Greater,
            _ => ord,
        }
    });
    rows
}

/// Evaluates every grid point over `n_runs` seeds. Every point sees the
/// same partitions and splits.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    if config.sweep.is_empty() {
        return Err(CliError::config("the sweep grid is empty"));
    }
    let points = config.sweep.points(&config.params);
    for p in &points {
        p.validate().map_err(|e| CliError::config(format!("grid point: {e}")))?;
    }
    let prepared = prepare(config)?;
    let runs: Vec<RunData> = (0..config.n_runs).map(|r| run_data(&prepared, config, r)).collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(point, params)| {
            score_point(&prepared, &runs, params, config)
                .map(|stats| SweepRow { point, params: params.clone(), stats })
                .map_err(|e| e.context(format!("grid point {point}")))
        })
        .collect::<Result<_>>()?;
    let metric = Metric::primary(prepared.task());
    let ranked = rank_rows(rows, metric);
    fs::create_dir_all(&config.output).map_err(|e| CliError::io(&config.output, e))?;
    write_sweep_csv(&config.output.join(SWEEP_FILE), &ranked, prepared.task())?;
    let best = ExperimentConfig { params: ranked[0].params.clone(), ..config.clone() };
    write_file(&config.output.join(BEST_CONFIG_FILE), &best.to_toml())?;
    Ok(SweepResult { primary_metric: metric, ranked })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

fn csv_row(w: &mut csv::Writer<fs::File>, path: &Path, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

fn csv_flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_sweep_csv(path: &Path, ranked: &[SweepRow], task: Task) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> =
        ["rank", "point", "eta", "lambda", "max_depth", "sampling_fraction"].map(String::from).to_vec();
    for m in Metric::reported(task) {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    csv_row(&mut w, path, &header)?;
    for (rank, row) in ranked.iter().enumerate() {
        let p = &row.params;
        let mut rec = vec![
            (rank + 1).to_string(),
            row.point.to_string(),
            p.eta.to_string(),
            p.lambda.to_string(),
            p.max_depth.to_string(),
            p.sampling_fraction.to_string(),
        ];
        for m in Metric::reported(task) {
            let s = row.stats.get(m);
            rec.push(opt(s.map(|s| s.mean)));
            rec.push(opt(s.map(|s| s.std)));
        }
        csv_row(&mut w, path, &rec)?;
    }
    csv_flush(w, path)
}

// ----------------------------------------------------------------- plotdata

/// Files written by `plotdata`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub boxplot: PathBuf,
    pub stats: PathBuf,
    pub deltas: PathBuf,
}

/// Boxplot data (one row per run score), per-label statistics and
/// per-client local-vs-global deltas from a set of summaries.
pub fn cmd_plotdata(summaries: &[RunSummary], out_dir: &Path) -> Result<PlotFiles> {
    let first = summaries.first().ok_or_else(|| CliError::config("plotdata needs at least one summary"))?;
    if let Some(other) = summaries.iter().find(|s| s.task != first.task) {
        return Err(CliError::config(format!(
            "cannot compare a {} summary ({}) with a {} summary ({})",
            first.task, first.label, other.task, other.label
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let files = PlotFiles {
        boxplot: out_dir.join(BOXPLOT_FILE),
        stats: out_dir.join(STATS_FILE),
        deltas: out_dir.join(DELTAS_FILE),
    };

    let mut w = csv_writer(&files.boxplot)?;
    csv_row(&mut w, &files.boxplot, &["label", "dataset", "metric", "run", "value"].map(String::from))?;
    for s in summaries {
        for r in &s.runs {
            for (m, v) in &r.best {
                let rec = [s.label.clone(), s.dataset.clone(), m.to_string(), r.run.to_string(), v.to_string()];
                csv_row(&mut w, &files.boxplot, &rec)?;
            }
        }
    }
    csv_flush(w, &files.boxplot)?;

    let mut w = csv_writer(&files.stats)?;
    csv_row(&mut w, &files.stats, &["label", "dataset", "metric", "n", "mean", "std"].map(String::from))?;
    for s in summaries {
        for (m, st) in &s.stats {
            let rec = [
                s.label.clone(),
                s.dataset.clone(),
                m.to_string(),
                st.values.len().to_string(),
                st.mean.to_string(),
                st.std.to_string(),
            ];
            csv_row(&mut w, &files.stats, &rec)?;
        }
    }
    csv_flush(w, &files.stats)?;

    let mut w = csv_writer(&files.deltas)?;
    let header = ["label", "dataset", "run", "client", "metric", "local", "global", "delta"].map(String::from);
    csv_row(&mut w, &files.deltas, &header)?;
    for s in summaries {
        for d in &s.local_vs_global {
            let rec = [
                s.label.clone(),
                s.dataset.clone(),
                d.run.to_string(),
                d.client.clone(),
                d.metric.to_string(),
                opt(d.local),
                opt(d.global),
                opt(d.delta),
            ];
            csv_row(&mut w, &files.deltas, &rec)?;
        }
    }
    csv_flush(w, &files.deltas)?;
    Ok(files)
}

// ----------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_rows: usize,
    /// Present when the file carries the target column.
    pub metrics: Option<MetricRecord>,
}

/// Scores a CSV with a saved model. Unseen categories are treated as
/// missing. Writes per-row predictions when `out` is given.
pub fn cmd_evaluate(model_path: &Path, data_path: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let model = ModelFile::load(model_path)?;
    let schema = model
        .schema
        .as_ref()
        .ok_or_else(|| CliError::config(format!("{} carries no encoding schema", model_path.display())))?;
    let categorical: Vec<String> = schema
        .feature_names
        .iter()
        .zip(&schema.categories)
        .filter(|(_, c)| c.is_some())
        .map(|(n, _)| n.clone())
        .chain(schema.task.is_classification().then(|| schema.target_column.clone()))
        .collect();
    let table = read_csv(data_path, &categorical)?;
    let (features, labels) = schema.apply(&table)?;
    let raw = model.predict_raw(&features)?;
    let metrics = match &labels {
        Some(y) => Some(evaluate(schema.task, schema.n_classes(), y, &raw)?),
        None => None,
    };
    if let Some(out) = out {
        let k = model.ensemble.n_outputs();
        let mut w = csv_writer(out)?;
        let mut header = vec!["row".to_string(), "prediction".to_string()];
        match schema.task {
            Task::Binary => header.push("probability".into()),
            Task::Multiclass => header.extend(schema.classes.iter().map(|c| format!("p_{c}"))),
            Task::Regression => {}
        }
        csv_row(&mut w, out, &header)?;
        for (r, chunk) in raw.chunks(k).enumerate() {
            let mut rec = vec![r.to_string()];
            match model.ensemble.link(chunk) {
                Prediction::Regression(v) => rec.push(v.to_string()),
                Prediction::Binary { probability, class } => {
                    rec.push(schema.decode_label(class).unwrap_or_default().to_string());
                    rec.push(probability.to_string());
                }
                Prediction::Multiclass { probabilities, class } => {
                    rec.push(schema.decode_label(class).unwrap_or_default().to_string());
                    rec.extend(probabilities.iter().map(f64::to_string));
                }
            }
            csv_row(&mut w, out, &rec)?;
        }
        csv_flush(w, out)?;
    }
    Ok(EvalReport { n_rows: features.n_rows(), metrics })
}

// ----------------------------------------------------------------- generate

/// Writes a synthetic table and a manifest partitioning it by `key`.
pub fn cmd_generate(spec: &SyntheticSpec, csv_path: &Path, manifest_path: &Path) -> Result<DatasetManifest> {
    for p in [csv_path, manifest_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    write_csv(&generate(spec), csv_path)?;
    // relative to the manifest when both share a directory
    let data_ref = match (csv_path.parent(), manifest_path.parent(), csv_path.file_name()) {
        (Some(a), Some(b), Some(name)) if a == b => PathBuf::from(name),
        _ => csv_path.to_path_buf(),
    };
    let manifest = DatasetManifest {
        path: data_ref,
        target_column: "y".into(),
        task: spec.task,
        split_feature: Some("key".into()),
        drop_columns: vec![],
        categorical_columns: vec![],
        positive_label: None,
    };
    write_file(manifest_path, &manifest.to_text())?;
    Ok(manifest)
}
