//! Experiment configuration: built-in defaults, then a TOML file, then
//! command-line flags, each layer overriding the previous one.

use std::path::{Path, PathBuf};

use histfed_core::data::{DatasetManifest, SplitScheme};
use histfed_core::{HyperParams, SamplingMethod};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Relative output directories resolve under this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "HISTFED_OUTPUT_ROOT";

/// How the pooled table is cut into clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Partition {
    /// One client per distinct value of the manifest's split feature.
    ByKey,
    /// Label-skewed synthetic clients, redrawn every run.
    Dirichlet { alpha: f64, n_clients: usize },
}

/// Hyperparameter grid searched by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub sampling_fraction: Vec<u32>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let rates = vec![0.001, 0.01, 0.02, 0.05, 0.1];
        Self {
            eta: rates.clone(),
            lambda: rates,
            max_depth: (3..=8).collect(),
            sampling_fraction: vec![10, 20, 30, 40, 50],
        }
    }
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.eta.len() * self.lambda.len() * self.max_depth.len() * self.sampling_fraction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point applied to `base`, in row-major order
    /// (eta slowest, sampling fraction fastest).
    pub fn points(&self, base: &HyperParams) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(self.len());
        for &eta in &self.eta {
            for &lambda in &self.lambda {
                for &max_depth in &self.max_depth {
                    for &sampling_fraction in &self.sampling_fraction {
                        out.push(HyperParams { eta, lambda, max_depth, sampling_fraction, ..base.clone() });
                    }
                }
            }
        }
        out
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub partition: Partition,
    pub split: SplitScheme,
    pub sampling: SamplingMethod,
    pub params: HyperParams,
    pub n_runs: usize,
    pub max_clients: Option<usize>,
    pub seed: u64,
    pub output: PathBuf,
    pub sweep: SweepGrid,
}

/// One configuration layer; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub manifest: Option<PathBuf>,
    pub partition: Option<Partition>,
    pub split: Option<SplitScheme>,
    pub sampling: Option<SamplingMethod>,
    pub params: ParamsLayer,
    pub n_runs: Option<usize>,
    pub max_clients: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsLayer {
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub max_depth: Option<usize>,
    pub max_bin: Option<usize>,
    pub sampling_fraction: Option<u32>,
    pub rounds: Option<usize>,
    pub early_stop: Option<usize>,
    pub gamma: Option<f64>,
    pub min_child_count: Option<u64>,
}

impl ParamsLayer {
    fn apply(&self, p: &mut HyperParams) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { p.$f = v; } )*};
        }
        set!(eta, lambda, max_depth, max_bin, sampling_fraction, rounds, gamma, min_child_count);
        if self.early_stop.is_some() {
            p.early_stop = self.early_stop;
        }
    }
}

impl ConfigLayer {
    /// Reads a TOML layer. A relative manifest path resolves against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut layer: ConfigLayer =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if let Some(m) = &layer.manifest {
            if m.is_relative() {
                layer.manifest = Some(path.parent().unwrap_or(Path::new("")).join(m));
            }
        }
        Ok(layer)
    }

    /// Fields set in `over` replace those of `self`.
    pub fn overlay(mut self, over: ConfigLayer) -> Self {
        macro_rules! take {
            ($($f:ident),*) => {$( if over.$f.is_some() { self.$f = over.$f; } )*};
        }
        take!(manifest, partition, split, sampling, n_runs, max_clients, seed, output, sweep);
        macro_rules! take_param {
            ($($f:ident),*) => {$( if over.params.$f.is_some() { self.params.$f = over.params.$f; } )*};
        }
        take_param!(eta, lambda, max_depth, max_bin, sampling_fraction, rounds, early_stop, gamma, min_child_count);
        self
    }

    /// Fills unset fields with defaults and validates the result.
    /// `output_root` prefixes a relative output directory.
    pub fn resolve(self, output_root: Option<&Path>) -> Result<ExperimentConfig> {
        let manifest = self.manifest.ok_or_else(|| CliError::config("no dataset manifest given"))?;
        let mut params = HyperParams::default();
        self.params.apply(&mut params);
        let mut output = self.output.unwrap_or_else(|| PathBuf::from("runs"));
        if output.is_relative() {
            if let Some(root) = output_root {
                output = root.join(output);
            }
        }
        let config = ExperimentConfig {
            manifest,
            partition: self.partition.unwrap_or(Partition::ByKey),
            split: self.split.unwrap_or(SplitScheme::TrainValid),
            sampling: self.sampling.unwrap_or(SamplingMethod::None),
            params,
            n_runs: self.n_runs.unwrap_or(5),
            max_clients: self.max_clients,
            seed: self.seed.unwrap_or(0),
            output,
            sweep: self.sweep.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Output root taken from the environment, if set and non-empty.
pub fn env_output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.n_runs < 1 {
            return Err(CliError::config("n_runs must be >= 1"));
        }
        if self.max_clients == Some(0) {
            return Err(CliError::config("max_clients must be >= 1"));
        }
        if let Partition::Dirichlet { alpha, n_clients } = self.partition {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(CliError::config(format!("dirichlet alpha must be > 0, got {alpha}")));
            }
            if n_clients < 2 {
                return Err(CliError::config(format!("dirichlet needs n_clients >= 2, got {n_clients}")));
            }
        }
        if !self.manifest.is_file() {
            return Err(CliError::config(format!("manifest {} does not exist", self.manifest.display())));
        }
        Ok(())
    }

    /// Loads the manifest and checks that its data file exists.
    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        let manifest = DatasetManifest::load(&self.manifest).map_err(|e| CliError::config(e.to_string()))?;
        if !manifest.path.is_file() {
            return Err(CliError::config(format!(
                "data file {} named by {} does not exist",
                manifest.path.display(),
                self.manifest.display()
            )));
        }
        Ok(manifest)
    }

    /// Dataset name shown in summaries: the manifest's file stem.
    pub fn dataset_name(&self) -> String {
        self.manifest.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 over everything that determines results: the manifest
    /// fields (minus the data path), the data file bytes and every setting
    /// except the output directory.
    pub fn fingerprint(&self, manifest: &DatasetManifest) -> Result<String> {
        let bytes = std::fs::read(&manifest.path).map_err(|e| CliError::io(&manifest.path, e))?;
        let mut hasher = Sha256::new();
        let view = FingerprintView {
            target_column: &manifest.target_column,
            task: manifest.task.to_string(),
            split_feature: manifest.split_feature.as_deref(),
            drop_columns: &manifest.drop_columns,
            categorical_columns: &manifest.categorical_columns,
            positive_label: manifest.positive_label.as_deref(),
            partition: &self.partition,
            split: self.split,
            sampling: self.sampling,
            params: &self.params,
            n_runs: self.n_runs,
            max_clients: self.max_clients,
            seed: self.seed,
        };
        hasher.update(serde_json::to_vec(&view).expect("fingerprint view serializes"));
        hasher.update(Sha256::digest(&bytes));
        Ok(hex(&hasher.finalize()))
    }
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    target_column: &'a str,
    task: String,
    split_feature: Option<&'a str>,
    drop_columns: &'a [String],
    categorical_columns: &'a [String],
    positive_label: Option<&'a str>,
    partition: &'a Partition,
    split: SplitScheme,
    sampling: SamplingMethod,
    params: &'a HyperParams,
    n_runs: usize,
    max_clients: Option<usize>,
    seed: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
