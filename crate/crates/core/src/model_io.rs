//! Self-contained model files: the ensemble plus the binning and encoding
//! needed to score raw rows.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binning::{BinningError, FeatureMatrix, GlobalBins};
use crate::data::Schema;
use crate::ensemble::{Ensemble, EnsembleError, Prediction};
use crate::params::HyperParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model format version {found} is not supported (expected {MODEL_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("model file is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub params: HyperParams,
    pub bins: GlobalBins,
    /// Absent for models trained on already numeric matrices.
    pub schema: Option<Schema>,
    pub ensemble: Ensemble,
}

impl ModelFile {
    pub fn new(params: HyperParams, bins: GlobalBins, schema: Option<Schema>, ensemble: Ensemble) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, params, bins, schema, ensemble }
    }

    pub fn to_json(&self) -> Result<String, ModelIoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelIoError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelIoError::Version { found: header.format_version });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<(), ModelIoError> {
        if self.bins.n_features() != self.ensemble.n_features() {
            return Err(ModelIoError::Inconsistent(format!(
                "bins describe {} features, ensemble expects {}",
                self.bins.n_features(),
                self.ensemble.n_features()
            )));
        }
        if let Some(f) = self.ensemble.trees().iter().filter_map(|t| t.max_feature()).max() {
            if f >= self.ensemble.n_features() {
                return Err(ModelIoError::Inconsistent(format!("a tree splits on missing feature {f}")));
            }
        }
        if let Some(schema) = &self.schema {
            if schema.n_features() != self.bins.n_features() {
                return Err(ModelIoError::Inconsistent(format!(
                    "schema has {} features, bins describe {}",
                    schema.n_features(),
                    self.bins.n_features()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelIoError> {
        std::fs::write(path, self.to_json()?)
            .map_err(|source| ModelIoError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ModelIoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ModelIoError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Raw scores of an encoded feature matrix, row-major.
    pub fn predict_raw(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelIoError> {
        let mut out = Vec::with_capacity(x.n_rows() * self.ensemble.n_outputs());
        for r in 0..x.n_rows() {
            let row = self.bins.bin_row(x.row(r))?;
            out.extend(self.ensemble.predict_raw(&row)?);
        }
        Ok(out)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<Prediction>, ModelIoError> {
        let k = self.ensemble.n_outputs();
        Ok(self.predict_raw(x)?.chunks(k).map(|raw| self.ensemble.link(raw)).collect())
    }
}
