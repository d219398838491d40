//! Versioned JSON model dump.
//!
//! Layout: `{"format": "qlatent-model", "version": 1, "slr": …, "scaler": …,
//! "qsvc": null | {…}}`. Floats are written with shortest round-trip
//! formatting, so a load returns bit-identical parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aalr::AalrScaler;
use crate::ksvm::MulticlassSvmModel;
use crate::linalg::Matrix;
use crate::qkernel::QuantumKernel;
use crate::slr::SlrModel;

pub const FORMAT: &str = "qlatent-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format {0:?})")]
    Format(String),
    #[error("unsupported model version {0}")]
    Version(u32),
}

/// Trained quantum classifier: the kernel, its aligned parameters, and the
/// scaled training latents every evaluation kernel is computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsvcModel {
    pub kernel: QuantumKernel,
    pub theta: Vec<f64>,
    pub train_latents: Matrix,
    pub svm: MulticlassSvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub format: String,
    pub version: u32,
    pub slr: SlrModel,
    pub scaler: Option<AalrScaler>,
    pub qsvc: Option<QsvcModel>,
}

impl ModelDump {
    pub fn new(slr: SlrModel, scaler: Option<AalrScaler>, qsvc: Option<QsvcModel>) -> Self {
        ModelDump { format: FORMAT.into(), version: VERSION, slr, scaler, qsvc }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model is serialisable")
    }

    pub fn from_json(s: &str) -> Result<Self, PersistError> {
        let dump: ModelDump = serde_json::from_str(s)?;
        if dump.format != FORMAT {
            return Err(PersistError::Format(dump.format));
        }
        if dump.version != VERSION {
            return Err(PersistError::Version(dump.version));
        }
        Ok(dump)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
