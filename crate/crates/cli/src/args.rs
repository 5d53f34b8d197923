//! Command-line arguments. Every experiment flag mirrors a config field and
//! overrides the config file when given.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histfed_core::data::SplitScheme;
use histfed_core::sampling::SamplingMethod;
use histfed_core::synthetic::SyntheticSpec;
use histfed_core::Task;

use crate::config::{env_output_root, ConfigLayer, ExperimentConfig, ParamsLayer, Partition};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "histfed", version, about = "Federated histogram gradient boosting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and report the partition of the first run.
    Prepare(ExperimentArgs),
    /// Federated training over `n_runs` seeds.
    Train(ExperimentArgs),
    /// Centralized training on the pooled client splits.
    Baseline(ExperimentArgs),
    /// Grid search over learning rate, regularization, depth and sampling fraction.
    Sweep(SweepArgs),
    /// Boxplot, statistics and local-vs-global tables from summary files.
    Plotdata(PlotArgs),
    /// Score a CSV file with a saved model.
    Evaluate(EvaluateArgs),
    /// Write a synthetic dataset with a natural partition key.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionKind {
    ByKey,
    Dirichlet,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub partition: Option<PartitionKind>,
    /// Dirichlet concentration.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of Dirichlet clients.
    #[arg(long)]
    pub n_clients: Option<usize>,
    /// `80/20` or `70/20/10`.
    #[arg(long)]
    pub split: Option<SplitScheme>,
    /// `none`, `uniform` or `mvs`.
    #[arg(long)]
    pub sampling: Option<SamplingMethod>,
    /// Sampling fraction in percent.
    #[arg(long)]
    pub fraction: Option<u32>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub max_bin: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Early stopping patience in rounds.
    #[arg(long)]
    pub early_stop: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub min_child_count: Option<u64>,
    #[arg(long)]
    pub n_runs: Option<usize>,
    /// Clients kept per run, drawn uniformly.
    #[arg(long)]
    pub max_clients: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; relative paths resolve under `$HISTFED_OUTPUT_ROOT` when set.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl ExperimentArgs {
    fn flag_layer(&self, base: &ConfigLayer) -> Result<ConfigLayer> {
        let dirichlet_base = match &base.partition {
            Some(Partition::Dirichlet { alpha, n_clients }) => Some((*alpha, *n_clients)),
            _ => None,
        };
        let wants_dirichlet = match self.partition {
            Some(PartitionKind::Dirichlet) => true,
            Some(PartitionKind::ByKey) => false,
            None => dirichlet_base.is_some() && (self.alpha.is_some() || self.n_clients.is_some()),
        };
        let partition = if wants_dirichlet {
            let alpha = self.alpha.or(dirichlet_base.map(|d| d.0));
            let n_clients = self.n_clients.or(dirichlet_base.map(|d| d.1));
            match (alpha, n_clients) {
                (Some(alpha), Some(n_clients)) => Some(Partition::Dirichlet { alpha, n_clients }),
                _ => return Err(CliError::config("a dirichlet partition needs --alpha and --n-clients")),
            }
        } else if self.partition == Some(PartitionKind::ByKey) {
            Some(Partition::ByKey)
        } else {
            if self.alpha.is_some() || self.n_clients.is_some() {
                return Err(CliError::config("--alpha and --n-clients only apply to a dirichlet partition"));
            }
            None
        };
        Ok(ConfigLayer {
            manifest: self.manifest.clone(),
            partition,
            split: self.split,
            sampling: self.sampling,
            params: ParamsLayer {
                eta: self.eta,
                lambda: self.lambda,
                max_depth: self.max_depth,
                max_bin: self.max_bin,
                sampling_fraction: self.fraction,
                rounds: self.rounds,
                early_stop: self.early_stop,
                gamma: self.gamma,
                min_child_count: self.min_child_count,
            },
            n_runs: self.n_runs,
            max_clients: self.max_clients,
            seed: self.seed,
            output: self.output.clone(),
            sweep: None,
        })
    }

    /// Config file (if any) overlaid with the flags.
    pub fn layer(&self) -> Result<ConfigLayer> {
        let base = match &self.config {
            Some(path) => ConfigLayer::load(path)?,
            None => ConfigLayer::default(),
        };
        let flags = self.flag_layer(&base)?;
        Ok(base.overlay(flags))
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.layer()?.resolve(env_output_root().as_deref())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Learning rates to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid_eta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_max_depth: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub grid_fraction: Option<Vec<u32>>,
}

impl SweepArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = self.experiment.resolve()?;
        let grid = &mut config.sweep;
        if let Some(v) = &self.grid_eta {
            grid.eta = v.clone();
        }
        if let Some(v) = &self.grid_lambda {
            grid.lambda = v.clone();
        }
        if let Some(v) = &self.grid_max_depth {
            grid.max_depth = v.clone();
        }
        if let Some(v) = &self.grid_fraction {
            grid.sampling_fraction = v.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Summary files written by `train` or `baseline`.
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(long, default_value = "plotdata")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the training columns; the target column is optional.
    #[arg(long)]
    pub data: PathBuf,
    /// Per-row predictions CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub features: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub keys: usize,
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
    /// Dirichlet concentration of each key's class mix.
    #[arg(long, default_value_t = 1.0)]
    pub label_skew: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

impl GenerateArgs {
    pub fn spec(&self) -> Result<SyntheticSpec> {
        if self.rows == 0 || self.keys == 0 || self.keys > self.rows {
            return Err(CliError::config("need 1 <= keys <= rows"));
        }
        if !(0.0..1.0).contains(&self.missing_rate)
            || self.label_skew.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(CliError::config("missing_rate must be in [0, 1) and label_skew > 0"));
        }
        let classes = if self.task == Task::Binary { 2 } else { self.classes };
        if self.task == Task::Multiclass && classes < 3 {
            return Err(CliError::config("multiclass needs at least 3 classes"));
        }
        let mut spec = SyntheticSpec::new(self.task, self.rows, self.features, classes, self.keys, self.seed);
        spec.missing_rate = self.missing_rate;
        spec.label_skew = self.label_skew;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_a_layer() {
        let cli = Cli::try_parse_from([
            "histfed",
            "train",
            "--manifest",
            "m",
            "--sampling",
            "mvs",
            "--fraction",
            "20",
            "--split",
            "70/20/10",
            "--partition",
            "dirichlet",
            "--alpha",
            "0.5",
            "--n-clients",
            "4",
            "--rounds",
            "7",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else { panic!("train") };
        let layer = args.layer().unwrap();
        assert_eq!(layer.sampling, Some(SamplingMethod::Mvs));
        assert_eq!(layer.params.sampling_fraction, Some(20));
        assert_eq!(layer.params.rounds, Some(7));
        assert_eq!(layer.split, Some(SplitScheme::TrainValidTest));
        assert_eq!(layer.partition, Some(Partition::Dirichlet { alpha: 0.5, n_clients: 4 }));
    }

    #[test]
    fn dirichlet_without_alpha_is_rejected() {
        let cli = Cli::try_parse_from(["histfed", "train", "--partition", "dirichlet"]).unwrap();
        let Command::Train(args) = cli.command else { panic!("train") };
        assert_eq!(args.layer().unwrap_err().exit_code(), crate::EXIT_CONFIG);
    }

    #[test]
    fn grid_lists_split_on_commas() {
        let cli = Cli::try_parse_from(["histfed", "sweep", "--grid-eta", "0.1,0.05", "--grid-max-depth", "3"]).unwrap();
        let Command::Sweep(args) = cli.command else { panic!("sweep") };
        assert_eq!(args.grid_eta, Some(vec![0.1, 0.05]));
        assert_eq!(args.grid_max_depth, Some(vec![3]));
    }
}
