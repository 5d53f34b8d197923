//! Seeded synthetic tables with a natural partition key, used as small
//! stand-ins for real federated datasets.
//!
//! Rows are spread over `n_keys` groups. Each group gets its own feature
//! shift and, for classification, its own class mix, so partitioning by
//! the key column yields non-IID clients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, RawTable};
use crate::params::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub task: Task,
    pub n_rows: usize,
    /// Numeric features; one extra categorical column `color` is always added.
    pub n_features: usize,
    /// Ignored for regression.
    pub n_classes: usize,
    pub n_keys: usize,
    /// Fraction of numeric cells left empty.
    pub missing_rate: f64,
    /// Dirichlet concentration of the per-key class mix; smaller is more skewed.
    pub label_skew: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(task: Task, n_rows: usize, n_features: usize, n_classes: usize, n_keys: usize, seed: u64) -> Self {
        Self { task, n_rows, n_features, n_classes, n_keys, missing_rate: 0.0, label_skew: 1.0, seed }
    }
}

const COLORS: [&str; 3] = ["red", "green", "blue"];

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Columns `x0..`, `color`, `key` (`k00`, `k01`, ...) and `y`.
pub fn generate(spec: &SyntheticSpec) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let d = spec.n_features;
    let k = if spec.task == Task::Regression { 1 } else { spec.n_classes.max(2) };

    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| 1.5 * unit.sample(&mut rng)).collect()).collect();
    let shifts: Vec<Vec<f64>> =
        (0..spec.n_keys).map(|_| (0..d).map(|_| 0.5 * unit.sample(&mut rng)).collect()).collect();
    let mixes: Vec<Vec<f64>> = (0..spec.n_keys).map(|_| dirichlet(&mut rng, spec.label_skew, k)).collect();
    let key_sizes = dirichlet(&mut rng, 4.0, spec.n_keys.max(1));
    let weights: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();

    let mut x = vec![Vec::with_capacity(spec.n_rows); d];
    let mut color = Vec::with_capacity(spec.n_rows);
    let mut key = Vec::with_capacity(spec.n_rows);
    let mut y = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        // the first n_keys rows seed every group so none is empty
        let g = if i < spec.n_keys { i } else { pick(&mut rng, &key_sizes) };
        let c_idx = rng.random_range(0..COLORS.len());
        let mut row: Vec<f64> = shifts[g].iter().map(|s| s + unit.sample(&mut rng)).collect();
        let label = match spec.task {
            Task::Regression => {
                let linear: f64 = row.iter().zip(&weights).map(|(a, b)| a * b).sum();
                let bump = if d > 0 { 2.0 * row[0].sin() } else { 0.0 };
                10.0 + 3.0 * linear + bump + c_idx as f64 + 0.5 * unit.sample(&mut rng)
            }
            Task::Binary | Task::Multiclass => {
                let class = pick(&mut rng, &mixes[g]);
                for (v, c) in row.iter_mut().zip(&centers[class]) {
                    *v += c;
                }
                class as f64
            }
        };
        for (f, v) in row.into_iter().enumerate() {
            let missing = spec.missing_rate > 0.0 && rng.random::<f64>() < spec.missing_rate;
            x[f].push(if missing { f64::NAN } else { (v * 1000.0).round() / 1000.0 });
        }
        color.push(Some(COLORS[c_idx].to_string()));
        key.push(Some(format!("k{g:02}")));
        y.push(label);
    }

    let mut names: Vec<String> = (0..d).map(|f| format!("x{f}")).collect();
    let mut columns: Vec<Column> = x.into_iter().map(Column::Numeric).collect();
    names.extend(["color".to_string(), "key".to_string(), "y".to_string()]);
    columns.push(Column::Categorical(color));
    columns.push(Column::Categorical(key));
    columns.push(Column::Numeric(y));
    RawTable::new(names, columns).expect("columns have equal length")
}
