//! First-order optimizers with weight decay.
//!
//! SGD folds the decay into the gradient, `p ← p − lr·(g + wd·p)`. Adam uses
//! bias-corrected moments and applies decoupled decay, `p ← p − lr·wd·p`,
//! after the adaptive step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!(
                "unknown optimizer `{s}` (expected sgd, adam)"
            ))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Optimizer state over a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: T,
    weight_decay: T,
    steps: usize,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            learning_rate: T::lit(learning_rate),
            weight_decay: T::lit(weight_decay),
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Applies one update. `names` labels the tensors for diagnostics. No
    /// parameter is touched when any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
        names: &[String],
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Contract(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "optimizer step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    param: name,
                    step: self.steps + 1,
                });
            }
        }
        self.steps += 1;
        let (lr, wd) = (self.learning_rate, self.weight_decay);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv = *pv - lr * (gv + wd * *pv);
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                    self.second = self.first.clone();
                }
                let b1 = T::lit(ADAM_BETA1);
                let b2 = T::lit(ADAM_BETA2);
                let eps = T::lit(ADAM_EPSILON);
                let t = self.steps as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[k] = b1 * m[k] + (T::one() - b1) * gv;
                        v[k] = b2 * v[k] + (T::one() - b2) * gv * gv;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                        *pv = *pv - lr * wd * *pv;
                    }
                }
            }
        }
        Ok(())
    }
}
