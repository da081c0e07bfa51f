//! Min–max normalization fitted on a training split, and imputation of
//! unobserved cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Sample;

/// Per-feature `(min, max)` over observed training cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    /// Fits on observed cells only. A feature never observed gets
    /// `min = max = 0`, so it normalizes to 0.
    pub fn fit(train: &[&Sample], features: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config(
                "cannot fit normalizer on an empty training split".into(),
            ));
        }
        let mut min = vec![f64::INFINITY; features];
        let mut max = vec![f64::NEG_INFINITY; features];
        for s in train {
            for (k, (&v, &seen)) in s.values.data().iter().zip(&s.mask).enumerate() {
                if seen {
                    let d = k % features;
                    min[d] = min[d].min(v);
                    max[d] = max[d].max(v);
                }
            }
        }
        for d in 0..features {
            if !min[d].is_finite() {
                min[d] = 0.0;
                max[d] = 0.0;
            }
        }
        Ok(Normalizer { min, max })
    }

    /// `(x − min)/(max − min)` clipped to `[0, 1]`; a degenerate range maps to 0.
    pub fn apply(&self, d: usize, x: f64) -> f64 {
        let range = self.max[d] - self.min[d];
        if range <= 0.0 {
            return 0.0;
        }
        ((x - self.min[d]) / range).clamp(0.0, 1.0)
    }
}

/// Forward fill within the sample, then the training mean of the feature.
/// Observed cells are never modified.
pub fn impute(values: &Tensor<f64>, mask: &[bool], train_means: &[f64]) -> Tensor<f64> {
    let (t_len, d_len) = (values.rows(), values.cols());
    let mut out = values.clone();
    let data = out.data_mut();
    for d in 0..d_len {
        let mut last: Option<f64> = None;
        for t in 0..t_len {
            let k = t * d_len + d;
            if mask[k] {
                last = Some(data[k]);
            } else {
                data[k] = last.unwrap_or(train_means[d]);
            }
        }
    }
    out
}

/// Everything fitted on the training split that is needed to turn a raw
/// sample into model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub normalizer: Normalizer,
    /// Mean of normalized observed training values per feature (0 if never
    /// observed).
    pub train_means: Vec<f64>,
}

impl Preprocessor {
    pub fn fit(train: &[&Sample], features: usize) -> Result<Self> {
        let normalizer = Normalizer::fit(train, features)?;
        let mut sums = vec![0.0; features];
        let mut counts = vec![0usize; features];
        for s in train {
            for (k, (&v, &seen)) in s.values.data().iter().zip(&s.mask).enumerate() {
                if seen {
                    let d = k % features;
                    sums[d] += normalizer.apply(d, v);
                    counts[d] += 1;
                }
            }
        }
        let train_means = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        Ok(Preprocessor {
            normalizer,
            train_means,
        })
    }

    /// Normalized, imputed `T×D` model input for `sample`.
    pub fn transform(&self, sample: &Sample) -> Tensor<f64> {
        let d_len = sample.values.cols();
        let normalized = Tensor::new(
            sample.values.shape(),
            sample
                .values
                .data()
                .iter()
                .enumerate()
                .map(|(k, &v)| self.normalizer.apply(k % d_len, v))
                .collect(),
        )
        .expect("same shape");
        impute(&normalized, &sample.mask, &self.train_means)
    }
}
