//! Per-round row selection.
//!
//! Minimal Variance Sampling keeps the `k = ⌈S·n/100⌉` rows with the largest
//! regularized gradient `ĝ = √(g² + λh²)`. Selection is deterministic
//! (top-k, lowest index first on ties) and selected rows keep their
//! unweighted gradients.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::GradHessVec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("MVS needs gradients from the previous round's predictions (round {0})")]
    MissingGradients(usize),
    #[error("sampling fraction must be in 1..=100, got {0}")]
    Fraction(u32),
    #[error("unknown sampling method `{0}` (expected none, uniform or mvs)")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    None,
    Uniform,
    Mvs,
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMethod::None => "none",
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::Mvs => "mvs",
        })
    }
}

impl FromStr for SamplingMethod {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "ns" => Ok(SamplingMethod::None),
            "uniform" | "u" => Ok(SamplingMethod::Uniform),
            "mvs" => Ok(SamplingMethod::Mvs),
            _ => Err(SamplingError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub method: SamplingMethod,
    /// Percentage of rows kept, `1..=100`. Forced to 100 for `None`.
    pub fraction: u32,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(method: SamplingMethod, fraction: u32, seed: u64) -> Result<Self, SamplingError> {
        if fraction == 0 || fraction > 100 {
            return Err(SamplingError::Fraction(fraction));
        }
        let fraction = if method == SamplingMethod::None { 100 } else { fraction };
        Ok(Self { method, fraction, seed })
    }

    pub fn none() -> Self {
        Self { method: SamplingMethod::None, fraction: 100, seed: 0 }
    }

    /// Short label such as `MVS20`, `U10` or `NS100`.
    pub fn label(&self) -> String {
        match self.method {
            SamplingMethod::None => "NS100".to_string(),
            SamplingMethod::Uniform => format!("U{}", self.fraction),
            SamplingMethod::Mvs => format!("MVS{}", self.fraction),
        }
    }
}

/// `⌈S·n/100⌉`.
pub fn sample_size(n: usize, fraction: u32) -> usize {
    (n * fraction as usize).div_ceil(100)
}

pub fn regularized_gradient(g: f64, h: f64, lambda: f64) -> f64 {
    (g * g + lambda * h * h).sqrt()
}

/// `ĝ` per row; multiclass rows fold all outputs into one norm,
/// `√(Σ g_c² + λ Σ h_c²)`.
pub fn regularized_gradients(gh: &GradHessVec, lambda: f64) -> Vec<f64> {
    (0..gh.n_rows())
        .map(|i| {
            let (g, h) = gh.row(i);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            let hh: f64 = h.iter().map(|v| v * v).sum();
            (gg + lambda * hh).sqrt()
        })
        .collect()
}

/// Indices of the `⌈S·n/100⌉` largest values, ascending. Ties keep the
/// lower index.
pub fn mvs_select(ghat: &[f64], fraction: u32) -> Vec<usize> {
    let k = sample_size(ghat.len(), fraction);
    let mut order: Vec<usize> = (0..ghat.len()).collect();
    // stable: equal values stay in index order
    order.sort_by(|&a, &b| ghat[b].total_cmp(&ghat[a]));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// `⌈S·n/100⌉` distinct indices drawn uniformly without replacement,
/// ascending.
pub fn uniform_select(n: usize, fraction: u32, seed: u64) -> Vec<usize> {
    let k = sample_size(n, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Row selection for one boosting round (1-based).
///
/// MVS without gradients is only allowed on the first round, where every
/// row is used.
pub fn select(
    config: &SamplingConfig,
    n: usize,
    gh: Option<&GradHessVec>,
    lambda: f64,
    round: usize,
    stream: u64,
) -> Result<Vec<usize>, SamplingError> {
    match config.method {
        SamplingMethod::None => Ok((0..n).collect()),
        SamplingMethod::Uniform => {
            let seed = crate::seed::derive(config.seed, &[stream, round as u64]);
            Ok(uniform_select(n, config.fraction, seed))
        }
        SamplingMethod::Mvs => match gh {
            Some(gh) => Ok(mvs_select(&regularized_gradients(gh, lambda), config.fraction)),
            None if round <= 1 => Ok((0..n).collect()),
            None => Err(SamplingError::MissingGradients(round)),
        },
    }
}
