//! Splitting, minibatch training with early stopping, evaluation and
//! checkpoints.
//!
//! Minibatch gradients are computed per sample (optionally on a rayon pool)
//! and summed in sample order, so results do not depend on the thread count.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, Preprocessor};
use crate::error::{Error, Result};
use crate::metrics::{cross_entropy, squared_error, MetricsReport};
use crate::model::{predict, sample_gradient, ModelConfig, ParamSet, Parameters, Task};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Quantity watched for early stopping and best-checkpoint selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Higher is better.
    ValAuc,
    /// Lower is better.
    ValLoss,
}

impl FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_auc" | "val-auc" => Ok(Monitor::ValAuc),
            "val_loss" | "val-loss" => Ok(Monitor::ValLoss),
            _ => Err(Error::Config(format!(
                "unknown monitor `{s}` (expected val_auc, val_loss)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without strict improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// `None` picks val_auc for classification and val_loss for regression.
    pub monitor: Option<Monitor>,
    /// Weight of the positive term of the cross-entropy.
    pub pos_weight: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
    /// Execution setting only: never serialized, never changes results.
    #[serde(skip, default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 5e-5,
            max_epochs: 200,
            patience: Some(10),
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            monitor: None,
            pos_weight: 1.0,
            train_fraction: 0.8,
            val_fraction: 0.1,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if self.patience == Some(0) {
            return bad("patience must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return bad("pos_weight must be finite and > 0");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        let (a, b) = (self.train_fraction, self.val_fraction);
        if !(a > 0.0 && b > 0.0 && a + b < 1.0) {
            return bad("split fractions need train > 0, val > 0 and train + val < 1");
        }
        Ok(())
    }

    pub fn resolved_monitor(&self, task: Task) -> Monitor {
        self.monitor.unwrap_or(match task {
            Task::Classification => Monitor::ValAuc,
            Task::Regression => Monitor::ValLoss,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn part(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
            SplitName::All => panic!("`all` is not a stored partition"),
        }
    }

    /// Indices of the named part; `All` is every sample in dataset order.
    pub fn select(&self, name: SplitName) -> Vec<usize> {
        match name {
            SplitName::All => (0..self.train.len() + self.val.len() + self.test.len()).collect(),
            part => self.part(part).to_vec(),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
            SplitName::All => "all",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            "all" => Ok(SplitName::All),
            _ => Err(Error::Config(format!(
                "unknown split `{s}` (expected train, val, test, all)"
            ))),
        }
    }
}

/// Random partition of `ds` into train/val/test. Samples are ordered by id
/// before shuffling, so the split depends only on the ids and the seed.
pub fn split_dataset(
    ds: &Dataset,
    train_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ds.samples[a].id.cmp(&ds.samples[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    order.shuffle(&mut rng);
    let n_train = (train_fraction * n as f64).round() as usize;
    let n_val = (val_fraction * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "{n} samples cannot be split {train_fraction}/{val_fraction} with every part non-empty"
        )));
    }
    Ok(Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Option<f64>,
}

impl EpochRecord {
    fn score(&self, monitor: Monitor) -> Option<f64> {
        match monitor {
            Monitor::ValAuc => self.val_auc,
            Monitor::ValLoss => Some(-self.val_loss),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub params: Parameters<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub monitor: Monitor,
    pub preprocessor: Preprocessor,
    pub split: Split,
    pub stopped_early: bool,
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Model inputs for every sample: normalized and imputed.
pub fn prepare_inputs(ds: &Dataset, prep: &Preprocessor) -> Vec<Tensor<f64>> {
    ds.samples.iter().map(|s| prep.transform(s)).collect()
}

fn sample_loss(task: Task, y_hat: f64, y: f64, pos_weight: f64) -> Result<f64> {
    Ok(match task {
        Task::Classification if y == 1.0 => pos_weight * cross_entropy(y_hat, y)?,
        Task::Classification => cross_entropy(y_hat, y)?,
        Task::Regression => squared_error(y_hat, y),
    })
}

/// Predictions for `indices`, in order.
pub fn predict_indices(
    params: &Parameters<f64>,
    config: &ModelConfig,
    inputs: &[Tensor<f64>],
    indices: &[usize],
    threads: usize,
) -> Result<Vec<f64>> {
    pool(threads)?.install(|| {
        indices
            .par_iter()
            .map(|&i| predict(&inputs[i], params, config))
            .collect()
    })
}

/// Trains on the training split, keeping the parameters of the best
/// validation epoch. `on_epoch` sees every epoch as it completes.
pub fn train(
    ds: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    ds.validate()?;
    if model.features != ds.features() || model.windows != ds.windows {
        return Err(Error::Schema(format!(
            "model expects T={}, D={}; dataset has T={}, D={}",
            model.windows,
            model.features,
            ds.windows,
            ds.features()
        )));
    }
    if model.task != ds.task {
        return Err(Error::Config(format!(
            "model task {} does not match dataset task {}",
            model.task, ds.task
        )));
    }
    let split = split_dataset(ds, cfg.train_fraction, cfg.val_fraction, cfg.seed)?;
    let prep = Preprocessor::fit(&ds.subset(&split.train), ds.features())?;
    let inputs = prepare_inputs(ds, &prep);
    let labels: Vec<f64> = ds.samples.iter().map(|s| s.label).collect();
    let monitor = cfg.resolved_monitor(model.task);
    let pool = pool(cfg.threads)?;
    let names = ParamSet::<()>::names();

    let mut params = Parameters::<f64>::init(model, cfg.seed);
    let mut opt = Optimizer::<f64>::new(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order = split.train.clone();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Parameters<f64>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<_> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        sample_gradient(&inputs[i], labels[i], &params, model, cfg.pos_weight)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut total = Parameters::<f64>::zeros_like(model).into_vec();
            for sg in per_sample {
                loss_sum += sg.loss;
                for (acc, g) in total.iter_mut().zip(sg.grads.into_vec()) {
                    acc.accumulate(g.data());
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let grads: Vec<Tensor<f64>> = total.into_iter().map(|g| g.scale(inv)).collect();
            let grad_refs: Vec<&Tensor<f64>> = grads.iter().collect();
            let mut flat = params.as_mut().into_vec();
            opt.step(&mut flat, &grad_refs, &names)?;
        }
        if !loss_sum.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: "training loss".into(),
                step: opt.steps(),
            });
        }
        let val_pred = pool.install(|| {
            split
                .val
                .par_iter()
                .map(|&i| predict(&inputs[i], &params, model))
                .collect::<Result<Vec<_>>>()
        })?;
        let val_labels: Vec<f64> = split.val.iter().map(|&i| labels[i]).collect();
        let mut val_loss = 0.0;
        for (&p, &y) in val_pred.iter().zip(&val_labels) {
            val_loss += sample_loss(model.task, p, y, 1.0)?;
        }
        val_loss /= val_pred.len() as f64;
        let val_auc = match model.task {
            Task::Classification => MetricsReport::classification(&val_pred, &val_labels)?.auc,
            Task::Regression => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / split.train.len() as f64,
            val_loss,
            val_auc,
        };
        on_epoch(&record);
        let score = record.score(monitor).ok_or_else(|| {
            Error::UndefinedMetric("validation AUC is undefined (single-class validation split); use monitor = val_loss".into())
        })?;
        history.push(record);
        match &best {
            Some((b, _, _)) if score <= *b => since_best += 1,
            _ => {
                best = Some((score, epoch, params.clone()));
                since_best = 0;
            }
        }
        if let Some(p) = cfg.patience {
            if since_best >= p && epoch < cfg.max_epochs {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        monitor,
        preprocessor: prep,
        split,
        stopped_early,
    })
}

/// Metrics of `params` on the given samples.
pub fn evaluate(
    params: &Parameters<f64>,
    model: &ModelConfig,
    ds: &Dataset,
    prep: &Preprocessor,
    indices: &[usize],
    threads: usize,
) -> Result<(Vec<f64>, MetricsReport)> {
    if indices.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let inputs = prepare_inputs(ds, prep);
    let preds = predict_indices(params, model, &inputs, indices, threads)?;
    let labels: Vec<f64> = indices.iter().map(|&i| ds.samples[i].label).collect();
    let report = match model.task {
        Task::Classification => MetricsReport::classification(&preds, &labels)?,
        Task::Regression => MetricsReport::regression(&preds, &labels),
    };
    Ok((preds, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Everything needed to reuse a trained model on compatible data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schema: FeatureSchema,
    pub preprocessor: Preprocessor,
    pub monitor: Monitor,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        outcome: &TrainOutcome,
        model: &ModelConfig,
        train: &TrainConfig,
        ds: &Dataset,
    ) -> Self {
        let params = ParamSet::<()>::names()
            .into_iter()
            .zip(outcome.params.as_ref().into_vec())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().dims(),
                values: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: model.clone(),
            train: train.clone(),
            schema: FeatureSchema::of(ds),
            preprocessor: outcome.preprocessor.clone(),
            monitor: outcome.monitor,
            best_epoch: outcome.best_epoch,
            history: outcome.history.clone(),
            params,
        }
    }

    pub fn parameters(&self) -> Result<Parameters<f64>> {
        let names = ParamSet::<()>::names();
        if self.params.len() != names.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} parameter tensors, expected {}",
                self.params.len(),
                names.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for (nt, want) in self.params.iter().zip(&names) {
            if &nt.name != want {
                return Err(Error::Schema(format!(
                    "expected parameter `{want}`, found `{}`",
                    nt.name
                )));
            }
            let shape = Shape::from_dims(&nt.shape)?;
            tensors.push(Tensor::new(shape, nt.values.clone())?);
        }
        let params = Parameters::from_vec(tensors)?;
        params.validate(&self.model)?;
        Ok(params)
    }

    /// Test/val/train partition of `ds` as used during training.
    pub fn split(&self, ds: &Dataset) -> Result<Split> {
        split_dataset(
            ds,
            self.train.train_fraction,
            self.train.val_fraction,
            self.train.seed,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        match v.get("format_version").and_then(|x| x.as_u64()) {
            Some(x) if x == CHECKPOINT_VERSION as u64 => {}
            Some(x) => {
                return Err(Error::Format(format!(
                    "checkpoint format version {x} is not supported (expected {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(Error::Format("checkpoint lacks format_version".into())),
        }
        let ck: Checkpoint =
            serde_json::from_value(v).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        ck.parameters()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
