//! Logistic regression baselines: one model on window-averaged features,
//! and one independent model per window whose coefficients are
//! softmax-normalized across features.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{sigmoid, Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LrModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            learning_rate: 0.01,
            weight_decay: 5e-5,
            epochs: 100,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

/// Per-feature mean over windows of a `T×D` matrix.
pub fn aggregate(x: &Tensor<f64>) -> Vec<f64> {
    let (t_len, d_len) = (x.rows(), x.cols());
    let mut out = vec![0.0; d_len];
    for t in 0..t_len {
        for (o, v) in out.iter_mut().zip(x.row(t)) {
            *o += v;
        }
    }
    out.iter().map(|s| s / t_len as f64).collect()
}

/// Minibatch descent on mean cross-entropy from a zero start. Batches are
/// shuffled with `cfg.seed`.
pub fn train_lr(rows: &[Vec<f64>], labels: &[f64], cfg: &LrConfig) -> Result<LrModel> {
    let Some(first) = rows.first() else {
        return Err(Error::Config(
            "logistic regression needs a non-empty training split".into(),
        ));
    };
    if rows.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} rows vs {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be >= 1".into()));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Contract(format!(
            "logistic regression label {y} is not 0/1"
        )));
    }
    let d_len = first.len();
    if let Some(r) = rows.iter().find(|r| r.len() != d_len) {
        return Err(Error::Dimension {
            op: "train_lr",
            left: Shape::Vector(d_len),
            right: Shape::Vector(r.len()),
        });
    }
    let mut w = Tensor::zeros(Shape::Vector(d_len));
    let mut b = Tensor::scalar(0.0);
    let mut opt = Optimizer::<f64>::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
    let names = ["weights".to_string(), "bias".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut gw = vec![0.0; d_len];
            let mut gb = 0.0;
            for &i in batch {
                let z = w
                    .data()
                    .iter()
                    .zip(&rows[i])
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    + b.item();
                let r = sigmoid(z) - labels[i];
                for (g, v) in gw.iter_mut().zip(&rows[i]) {
                    *g += r * v;
                }
                gb += r;
            }
            let inv = 1.0 / batch.len() as f64;
            let gw = Tensor::vector(gw.into_iter().map(|g| g * inv).collect());
            let gb = Tensor::scalar(gb * inv);
            opt.step(&mut [&mut w, &mut b], &[&gw, &gb], &names)?;
        }
    }
    Ok(LrModel {
        weights: w.into_data(),
        bias: b.item(),
    })
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerWindowLr {
    /// One model per window, oldest first.
    pub models: Vec<LrModel>,
    /// `T×D`, row `t` = softmax of window `t`'s coefficients.
    pub normalized: Vec<Vec<f64>>,
}

/// Trains one model per window on that window's features only.
pub fn per_window_lr(
    inputs: &[&Tensor<f64>],
    labels: &[f64],
    cfg: &LrConfig,
) -> Result<PerWindowLr> {
    let Some(first) = inputs.first() else {
        return Err(Error::Config(
            "logistic regression needs a non-empty training split".into(),
        ));
    };
    let mut models = Vec::with_capacity(first.rows());
    for t in 0..first.rows() {
        let rows: Vec<Vec<f64>> = inputs.iter().map(|x| x.row(t).to_vec()).collect();
        models.push(train_lr(&rows, labels, cfg)?);
    }
    let normalized = models.iter().map(|m| softmax(&m.weights)).collect();
    Ok(PerWindowLr { models, normalized })
}

/// CSV `window,feature,normalized_coefficient`, windows 1-based.
pub fn write_coefficients_csv(
    table: &[Vec<f64>],
    feature_names: &[String],
    path: &Path,
) -> Result<()> {
    let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["window", "feature", "normalized_coefficient"])
        .map_err(err)?;
    for (t, row) in table.iter().enumerate() {
        for (name, v) in feature_names.iter().zip(row) {
            w.write_record([(t + 1).to_string(), name.clone(), format!("{v:.16e}")])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
