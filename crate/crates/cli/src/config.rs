//! Run configuration file (TOML).
//!
//! Precedence, lowest first: built-in defaults, the `--config` file,
//! command-line flags.
//!
//! ```toml
//! seed = 7
//! threads = 4
//! out_dir = "runs"
//!
//! [model]
//! rnn_dim = 16
//! film_dim = 16
//! variant = "full"
//!
//! [train]
//! learning_rate = 0.001
//! patience = 10        # 0 disables early stopping
//!
//! [baseline]
//! learning_rate = 0.01
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use titv_core::baseline::LrConfig;
use titv_core::model::Variant;
use titv_core::optim::OptimizerKind;
use titv_core::train::{Monitor, TrainConfig};
use titv_core::{Error, Result};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub baseline: BaselineSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub rnn_dim: Option<usize>,
    pub film_dim: Option<usize>,
    pub variant: Option<Variant>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<OptimizerKind>,
    pub monitor: Option<Monitor>,
    pub pos_weight: Option<f64>,
    pub train_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<OptimizerKind>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Patience as given on the command line or in a file, `0` meaning off.
pub fn patience_from(v: usize) -> Option<usize> {
    (v > 0).then_some(v)
}

impl TrainSection {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(
            learning_rate,
            weight_decay,
            max_epochs,
            batch_size,
            optimizer,
            pos_weight,
            train_fraction,
            val_fraction
        );
        if let Some(p) = self.patience {
            cfg.patience = patience_from(p);
        }
        if self.monitor.is_some() {
            cfg.monitor = self.monitor;
        }
    }
}

impl BaselineSection {
    pub fn apply(&self, cfg: &mut LrConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(learning_rate, weight_decay, epochs, batch_size, optimizer);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_changes_nothing() {
        let f = FileConfig::parse("").unwrap();
        let mut cfg = TrainConfig::default();
        f.train.apply(&mut cfg);
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let f = FileConfig::parse(
            "seed = 3\n[model]\nvariant = \"variant_only\"\nrnn_dim = 8\n[train]\npatience = 0\nlearning_rate = 0.01\nmonitor = \"val_loss\"\n[baseline]\nepochs = 5\n",
        )
        .unwrap();
        assert_eq!(f.seed, Some(3));
        assert_eq!(f.model.variant, Some(Variant::VariantOnly));
        let mut cfg = TrainConfig::default();
        f.train.apply(&mut cfg);
        assert_eq!(cfg.patience, None);
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.monitor, Some(Monitor::ValLoss));
        assert_eq!(cfg.max_epochs, 200);
        let mut lr = LrConfig::default();
        f.baseline.apply(&mut lr);
        assert_eq!(lr.epochs, 5);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = FileConfig::parse("[train]\nlearnig_rate = 0.1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("learnig_rate"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }
}
