//! Synthetic datasets with planted per-feature weights and time schedules.
//!
//! Cells are drawn as `x = u + ε` with `u ~ U[0,1]` and `ε ~ N(0, noise²)`.
//! The label logit is `Σ_t Σ_d g_d·m_d(t)·x_{t,d}`, centered by its
//! population mean `½·Σ g_d·m_d(t)`, so the base rate is ½ for every spec.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tensor::{sigmoid, Shape, Tensor};

use super::{Dataset, Sample};

/// Time profile `m_d(t)` of a feature's influence, with `max_t |m_d(t)| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    /// 1 in every window.
    Constant,
    /// Linear from −1 in the oldest window to +1 in the newest.
    Ramp,
    /// 1 in a single window (1-based), 0 elsewhere.
    Spike(usize),
}

impl Schedule {
    pub const ALLOWED: &'static str = "constant, ramp, spike@<window>";

    pub fn value(&self, t: usize, windows: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Ramp if windows == 1 => 1.0,
            Schedule::Ramp => -1.0 + 2.0 * t as f64 / (windows - 1) as f64,
            Schedule::Spike(k) => {
                if t + 1 == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn series(&self, windows: usize) -> Vec<f64> {
        (0..windows).map(|t| self.value(t, windows)).collect()
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "ramp" => Ok(Schedule::Ramp),
            _ => {
                if let Some(k) = s.strip_prefix("spike@") {
                    if let Ok(k) = k.parse::<usize>() {
                        if k >= 1 {
                            return Ok(Schedule::Spike(k));
                        }
                    }
                }
                Err(Error::Config(format!(
                    "unknown schedule `{s}` (allowed: {})",
                    Schedule::ALLOWED
                )))
            }
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant => f.write_str("constant"),
            Schedule::Ramp => f.write_str("ramp"),
            Schedule::Spike(k) => write!(f, "spike@{k}"),
        }
    }
}

impl TryFrom<String> for Schedule {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| match e {
            Error::Config(m) => m,
            other => other.to_string(),
        })
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFeature {
    #[serde(default)]
    pub name: Option<String>,
    pub weight: f64,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub samples: usize,
    pub windows: usize,
    pub features: Vec<SynthFeature>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Multiplies the centered logit before the sigmoid.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Probability that a cell is unobserved.
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

fn default_task() -> Task {
    Task::Classification
}

impl SynthSpec {
    /// `D` features with the given schedules and unit weights.
    pub fn with_schedules(
        samples: usize,
        windows: usize,
        schedules: &[Schedule],
        seed: u64,
    ) -> Self {
        SynthSpec {
            samples,
            windows,
            features: schedules
                .iter()
                .map(|&schedule| SynthFeature {
                    name: None,
                    weight: 1.0,
                    schedule,
                })
                .collect(),
            noise: default_noise(),
            scale: default_scale(),
            missing_rate: 0.0,
            task: default_task(),
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.windows == 0 || self.features.is_empty() {
            return Err(Error::Config(
                "synth spec needs samples, windows and features >= 1".into(),
            ));
        }
        for (d, f) in self.features.iter().enumerate() {
            if !f.weight.is_finite() {
                return Err(Error::Config(format!(
                    "feature {} has a non-finite weight",
                    d + 1
                )));
            }
            if let Schedule::Spike(k) = f.schedule {
                if k > self.windows {
                    return Err(Error::Config(format!(
                        "feature {} spikes at window {k} but T = {}",
                        d + 1,
                        self.windows
                    )));
                }
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be finite and >= 0".into()));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("scale must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must lie in [0, 1)".into()));
        }
        let names = self.feature_names();
        let unique: std::collections::BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Config("duplicate feature names".into()));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features
            .iter()
            .enumerate()
            .map(|(d, f)| f.name.clone().unwrap_or_else(|| format!("f{}", d + 1)))
            .collect()
    }
}

/// Planted truth stored with a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub weights: Vec<f64>,
    pub schedules: Vec<Schedule>,
    /// Row-major `T×D` matrix of `m_d(t)`.
    pub schedule_matrix: Vec<f64>,
    pub scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl GroundTruth {
    /// Effective cell weight `g_d·m_d(t)` as a series over windows.
    pub fn effective_series(&self, d: usize) -> Vec<f64> {
        let d_len = self.weights.len();
        (0..self.schedule_matrix.len() / d_len)
            .map(|t| self.weights[d] * self.schedule_matrix[t * d_len + d])
            .collect()
    }
}

/// Generates a dataset from `spec`; bit-identical for equal specs.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let (t_len, d_len) = (spec.windows, spec.features.len());
    let weights: Vec<f64> = spec.features.iter().map(|f| f.weight).collect();
    let schedules: Vec<Schedule> = spec.features.iter().map(|f| f.schedule).collect();
    let mut coef = vec![0.0; t_len * d_len];
    let mut schedule_matrix = vec![0.0; t_len * d_len];
    for t in 0..t_len {
        for d in 0..d_len {
            schedule_matrix[t * d_len + d] = schedules[d].value(t, t_len);
            coef[t * d_len + d] = weights[d] * schedule_matrix[t * d_len + d];
        }
    }
    let center = 0.5 * coef.iter().sum::<f64>();
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.samples.to_string().len();

    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let mut values = Vec::with_capacity(t_len * d_len);
        let mut mask = Vec::with_capacity(t_len * d_len);
        let mut logit = -center;
        for &c in &coef {
            let x = rng.random::<f64>() + normal.sample(&mut rng);
            logit += c * x;
            let seen = spec.missing_rate == 0.0 || rng.random::<f64>() >= spec.missing_rate;
            values.push(if seen { x } else { 0.0 });
            mask.push(seen);
        }
        let label = match spec.task {
            Task::Classification => {
                if rng.random::<f64>() < sigmoid(spec.scale * logit) {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Regression => spec.scale * logit,
        };
        samples.push(Sample {
            id: format!("s{i:0width$}"),
            values: Tensor::new(Shape::Matrix(t_len, d_len), values)?,
            mask,
            label,
        });
    }
    Ok(Dataset {
        feature_names: spec.feature_names(),
        windows: t_len,
        task: spec.task,
        samples,
        preprocessing: None,
        ground_truth: Some(GroundTruth {
            weights,
            schedules,
            schedule_matrix,
            scale: spec.scale,
            noise: spec.noise,
            seed: spec.seed,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_have_unit_peak() {
        for t_len in [1, 2, 5, 8] {
            for s in [Schedule::Constant, Schedule::Ramp, Schedule::Spike(1)] {
                let peak = s.series(t_len).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert_eq!(peak, 1.0, "{s} T={t_len}");
            }
        }
        assert_eq!(Schedule::Ramp.series(3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(Schedule::Spike(2).series(3), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!("spike@3".parse::<Schedule>().unwrap(), Schedule::Spike(3));
        let err = "wobble".parse::<Schedule>().unwrap_err().to_string();
        assert!(err.contains("constant") && err.contains("ramp") && err.contains("spike"));
        assert!("spike@0".parse::<Schedule>().is_err());
    }

    #[test]
    fn toml_spec() {
        let spec = SynthSpec::from_toml(
            r#"
            samples = 1000
            windows = 5
            seed = 7
            features = [
              { weight = 1.0, schedule = "ramp" },
              { weight = -0.5, schedule = "constant", name = "urea" },
              { weight = 1.0, schedule = "spike@5" },
              { weight = 0.0, schedule = "constant" },
            ]
            "#,
        )
        .unwrap();
        assert_eq!(spec.feature_names(), vec!["f1", "urea", "f3", "f4"]);
        let ds = synth_generate(&spec).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.features(), 4);
        ds.validate().unwrap();

        let bad = SynthSpec::from_toml(
            "samples = 1\nwindows = 2\nfeatures = [{ weight = 1.0, schedule = \"zigzag\" }]\n",
        )
        .unwrap_err()
        .to_string();
        assert!(bad.contains("spike@<window>"), "{bad}");
    }

    #[test]
    fn bit_deterministic() {
        let spec = SynthSpec::with_schedules(200, 4, &[Schedule::Ramp, Schedule::Constant], 11);
        assert_eq!(
            synth_generate(&spec).unwrap(),
            synth_generate(&spec).unwrap()
        );
        let other = SynthSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            synth_generate(&spec).unwrap(),
            synth_generate(&other).unwrap()
        );
    }

    #[test]
    fn base_rate_within_three_sigma() {
        let mut spec = SynthSpec::with_schedules(
            10_000,
            8,
            &[
                Schedule::Ramp,
                Schedule::Constant,
                Schedule::Spike(3),
                Schedule::Constant,
            ],
            3,
        );
        spec.features[1].weight = -2.0;
        spec.scale = 3.0;
        let ds = synth_generate(&spec).unwrap();
        let n = ds.len() as f64;
        let rate = ds.samples.iter().map(|s| s.label).sum::<f64>() / n;
        let sigma = (0.25 / n).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn labels_follow_planted_logit() {
        // a strong constant feature should sort labels almost perfectly
        let mut spec = SynthSpec::with_schedules(2000, 3, &[Schedule::Constant], 5);
        spec.scale = 40.0;
        spec.noise = 0.0;
        let ds = synth_generate(&spec).unwrap();
        let scores: Vec<f64> = ds.samples.iter().map(|s| s.values.sum()).collect();
        let labels: Vec<f64> = ds.samples.iter().map(|s| s.label).collect();
        assert!(crate::metrics::roc_auc(&scores, &labels).unwrap() > 0.97);
    }

    #[test]
    fn missing_cells_are_masked() {
        let mut spec = SynthSpec::with_schedules(500, 4, &[Schedule::Constant; 3], 1);
        spec.missing_rate = 0.3;
        let ds = synth_generate(&spec).unwrap();
        let cells = (ds.len() * 12) as f64;
        let missing = ds
            .samples
            .iter()
            .flat_map(|s| &s.mask)
            .filter(|m| !**m)
            .count() as f64;
        assert!((missing / cells - 0.3).abs() < 0.03);
        for s in &ds.samples {
            for (v, m) in s.values.data().iter().zip(&s.mask) {
                if !m {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn regression_labels_are_centered_logits() {
        let mut spec = SynthSpec::with_schedules(1, 2, &[Schedule::Ramp, Schedule::Constant], 9);
        spec.task = Task::Regression;
        spec.scale = 2.0;
        let ds = synth_generate(&spec).unwrap();
        let s = &ds.samples[0];
        let gt = ds.ground_truth.as_ref().unwrap();
        let mut logit = 0.0;
        for t in 0..2 {
            for d in 0..2 {
                let c = gt.weights[d] * gt.schedule_matrix[t * 2 + d];
                logit += c * (s.values.get(t, d) - 0.5);
            }
        }
        assert!((s.label - 2.0 * logit).abs() < 1e-12);
    }
}
