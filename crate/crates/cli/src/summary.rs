//! Run summaries and the files `train` and `baseline` write.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use histfed_core::metrics::{Metric, MetricRecord};
use histfed_core::model_io::ModelFile;
use histfed_core::trainer::RoundRecord;
use histfed_core::Task;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::experiment::{Prepared, RunData, RunOutcome};

pub const SUMMARY_FILE: &str = "summary.json";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const TIMING_FILE: &str = "round_timing.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const MODELS_DIR: &str = "models";

/// Mean and population standard deviation of a set of run scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self { values, mean, std }
    }
}

/// Mean and population standard deviation, summed in order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Best value of `metric` over a run's rounds, with ties going to the
/// earliest round.
pub fn best_over_rounds(history: &[RoundRecord], metric: Metric) -> Option<f64> {
    history.iter().filter_map(|r| r.validation.get(metric)).fold(None, |best: Option<f64>, v| match best {
        Some(b) if !metric.improves(v, b) => Some(b),
        _ => Some(v),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub run: usize,
    pub seed: u64,
    pub clients: Vec<String>,
    pub rounds_trained: usize,
    pub best_round: usize,
    pub stopped_early: bool,
    /// Best per-round validation value of every reported metric.
    pub best: BTreeMap<Metric, f64>,
    /// Primary metric after every round.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub run: usize,
    pub client: String,
    pub metric: Metric,
    pub local: Option<f64>,
    pub global: Option<f64>,
    /// Positive means the local test score is better than the pooled one.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    /// `MVS20`, `U10`, `NS100`, or `Central` for the baseline.
    pub label: String,
    pub dataset: String,
    pub task: Task,
    pub primary_metric: Metric,
    pub fingerprint: String,
    pub n_runs: usize,
    pub runs: Vec<RunScore>,
    pub stats: BTreeMap<Metric, MetricStats>,
    pub local_vs_global: Vec<DeltaRow>,
}

impl RunSummary {
    pub fn new(
        command: &str,
        label: String,
        dataset: String,
        prepared: &Prepared,
        runs: Vec<RunScore>,
        deltas: Vec<DeltaRow>,
    ) -> Self {
        let task = prepared.task();
        let mut stats = BTreeMap::new();
        for &m in Metric::reported(task) {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.best.get(&m).copied()).collect();
            if values.len() == runs.len() {
                stats.insert(m, MetricStats::from_values(values));
            }
        }
        Self {
            command: command.to_string(),
            label,
            dataset,
            task,
            primary_metric: Metric::primary(task),
            fingerprint: prepared.fingerprint.clone(),
            n_runs: runs.len(),
            runs,
            stats,
            local_vs_global: deltas,
        }
    }

    pub fn primary(&self) -> Option<&MetricStats> {
        self.stats.get(&self.primary_metric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
    }
}

pub fn run_score(data: &RunData, outcome: &RunOutcome, task: Task) -> RunScore {
    let primary = Metric::primary(task);
    RunScore {
        run: data.run,
        seed: data.seed,
        clients: data.client_names.clone(),
        rounds_trained: outcome.history.len(),
        best_round: outcome.best_round,
        stopped_early: outcome.stopped_early,
        best: Metric::reported(task)
            .iter()
            .filter_map(|&m| best_over_rounds(&outcome.history, m).map(|v| (m, v)))
            .collect(),
        curve: outcome.history.iter().map(|r| r.validation.get(primary).unwrap_or(f64::NAN)).collect(),
    }
}

pub fn delta_rows(data: &RunData, outcome: &RunOutcome) -> Vec<DeltaRow> {
    outcome
        .deltas
        .iter()
        .map(|d| DeltaRow {
            run: data.run,
            client: data.client_names[d.client_id].clone(),
            metric: d.metric,
            local: d.local,
            global: d.global,
            delta: d.delta,
        })
        .collect()
}

/// One line of `rounds.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLine {
    pub run: usize,
    pub round: usize,
    pub validation: MetricRecord,
    pub train_loss: f64,
    /// `(client id, sampled rows)` per client.
    pub sampled: Vec<(usize, usize)>,
}

/// One line of `round_timing.jsonl`. Kept apart from the round log so
/// the latter stays byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLine {
    pub run: usize,
    /// `None` when the trainer reports only a whole-run time.
    pub round: Option<usize>,
    pub wall_ms: f64,
}

/// Streams run artifacts into an output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    rounds: fs::File,
    timing: fs::File,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

impl ArtifactWriter {
    pub fn create(dir: &Path, config_toml: &str) -> Result<Self> {
        fs::create_dir_all(dir.join(MODELS_DIR)).map_err(|e| CliError::io(dir, e))?;
        write_file(&dir.join(CONFIG_FILE), config_toml)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            rounds: create(&dir.join(ROUNDS_FILE))?,
            timing: create(&dir.join(TIMING_FILE))?,
        })
    }

    pub fn record_run(&mut self, prepared: &Prepared, data: &RunData, outcome: &RunOutcome) -> Result<()> {
        let rounds_path = self.dir.join(ROUNDS_FILE);
        let timing_path = self.dir.join(TIMING_FILE);
        for r in &outcome.history {
            let line = RoundLine {
                run: data.run,
                round: r.round,
                validation: r.validation.clone(),
                train_loss: r.train_loss,
                sampled: r.sampled.clone(),
            };
            writeln!(self.rounds, "{}", serde_json::to_string(&line).expect("round line serializes"))
                .map_err(|e| CliError::io(&rounds_path, e))?;
        }
        for &(round, wall_ms) in &outcome.timings_ms {
            let line = TimingLine { run: data.run, round, wall_ms };
            writeln!(self.timing, "{}", serde_json::to_string(&line).expect("timing line serializes"))
                .map_err(|e| CliError::io(&timing_path, e))?;
        }
        let model = ModelFile::new(
            outcome.params.clone(),
            outcome.bins.clone(),
            Some(prepared.schema.clone()),
            outcome.model.clone(),
        );
        model.save(&self.model_path(data.run))?;
        Ok(())
    }

    pub fn model_path(&self, run: usize) -> PathBuf {
        model_path(&self.dir, run)
    }

    pub fn finish(self, summary: &RunSummary) -> Result<()> {
        write_file(&self.dir.join(SUMMARY_FILE), &summary.to_json())
    }
}

pub fn model_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(MODELS_DIR).join(format!("run_{run}.json"))
}
