use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// Which modules take part in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Time-variant module removed: `ξ_t = β`.
    #[serde(alias = "invariant-only")]
    InvariantOnly,
    /// Time-invariant module removed: plain GRU inputs, `ξ_t = α_t`.
    #[serde(alias = "variant-only")]
    VariantOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::InvariantOnly, Variant::VariantOnly];

    pub fn uses_invariant(self) -> bool {
        self != Variant::VariantOnly
    }

    pub fn uses_variant(self) -> bool {
        self != Variant::InvariantOnly
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "invariant_only" => Ok(Variant::InvariantOnly),
            "variant_only" => Ok(Variant::VariantOnly),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected full, invariant-only, variant-only)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::InvariantOnly => "invariant-only",
            Variant::VariantOnly => "variant-only",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            _ => Err(Error::Config(format!(
                "unknown task `{s}` (expected classification, regression)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// D
    pub features: usize,
    /// T
    pub windows: usize,
    /// Hidden size per direction of the time-variant GRU.
    pub rnn_dim: usize,
    /// Hidden size per direction of the time-invariant GRU.
    pub film_dim: usize,
    pub task: Task,
    pub variant: Variant,
}

impl ModelConfig {
    pub const DEFAULT_RNN_DIM: usize = 16;
    pub const DEFAULT_FILM_DIM: usize = 16;

    pub fn new(features: usize, windows: usize) -> Self {
        ModelConfig {
            features,
            windows,
            rnn_dim: Self::DEFAULT_RNN_DIM,
            film_dim: Self::DEFAULT_FILM_DIM,
            task: Task::Classification,
            variant: Variant::Full,
        }
    }

    pub fn with_dims(mut self, rnn_dim: usize, film_dim: usize) -> Self {
        self.rnn_dim = rnn_dim;
        self.film_dim = film_dim;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("features", self.features),
            ("windows", self.windows),
            ("rnn_dim", self.rnn_dim),
            ("film_dim", self.film_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}
