//! Datasets: windowed event ingestion, normalization and imputation,
//! persistence, and the synthetic generator with planted importances.

mod events;
mod io;
mod prep;
mod synth;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tensor::{Shape, Tensor};

pub use events::{ingest, read_events, read_labels, windowize, LabelRow, RawEvent, WindowSpec};
pub use io::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use prep::{impute, Normalizer, Preprocessor};
pub use synth::{synth_generate, GroundTruth, Schedule, SynthFeature, SynthSpec};

/// One labelled time series: a `T×D` matrix plus its observation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub values: Tensor<f64>,
    /// Row-major `T×D`; `true` where at least one event was observed.
    pub mask: Vec<bool>,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub windows: usize,
    pub task: Task,
    pub samples: Vec<Sample>,
    /// Statistics fitted on a training split, when the dataset was prepared.
    pub preprocessing: Option<Preprocessor>,
    /// Planted generator truth for synthetic datasets.
    pub ground_truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Lookup(format!("unknown feature `{name}`")))
    }

    pub fn sample_index(&self, id: &str) -> Result<usize> {
        self.samples
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::Lookup(format!("unknown sample id `{id}`")))
    }

    /// SHA-256 over the ordered feature names.
    pub fn feature_digest(&self) -> String {
        feature_digest(&self.feature_names)
    }

    /// Checks matrix shapes, mask lengths, labels and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let shape = Shape::Matrix(self.windows, self.features());
        if self.windows == 0 || self.features() == 0 {
            return Err(Error::Schema("dataset needs T >= 1 and D >= 1".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicate sample id `{}`", s.id)));
            }
            if s.values.shape() != shape {
                return Err(Error::Schema(format!(
                    "sample `{}` has shape {}, dataset declares {shape}",
                    s.id,
                    s.values.shape()
                )));
            }
            if s.mask.len() != shape.len() {
                return Err(Error::Schema(format!(
                    "sample `{}` mask has {} cells, expected {}",
                    s.id,
                    s.mask.len(),
                    shape.len()
                )));
            }
            if !s.values.is_finite() {
                return Err(Error::Schema(format!(
                    "sample `{}` has non-finite values",
                    s.id
                )));
            }
            match self.task {
                Task::Classification if s.label != 0.0 && s.label != 1.0 => {
                    return Err(Error::Schema(format!(
                        "sample `{}` label {} is not 0/1",
                        s.id, s.label
                    )))
                }
                _ if !s.label.is_finite() => {
                    return Err(Error::Schema(format!(
                        "sample `{}` label is not finite",
                        s.id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Samples at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }
}

pub fn feature_digest(names: &[String]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Serializable form of the per-dataset metadata, shared by the dataset
/// file header and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub feature_names: Vec<String>,
    pub windows: usize,
    pub digest: String,
}

impl FeatureSchema {
    pub fn of(ds: &Dataset) -> Self {
        FeatureSchema {
            feature_names: ds.feature_names.clone(),
            windows: ds.windows,
            digest: ds.feature_digest(),
        }
    }

    /// Fails with a schema error when `ds` does not share this layout.
    pub fn check(&self, ds: &Dataset) -> Result<()> {
        if self.windows != ds.windows || self.feature_names.len() != ds.features() {
            return Err(Error::Schema(format!(
                "checkpoint expects T={}, D={}; dataset has T={}, D={}",
                self.windows,
                self.feature_names.len(),
                ds.windows,
                ds.features()
            )));
        }
        if self.digest != ds.feature_digest() {
            return Err(Error::Schema(
                "feature map digest differs between checkpoint and dataset".into(),
            ));
        }
        Ok(())
    }
}
