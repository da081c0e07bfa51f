//! Feature importance `FI[t][d] = (β_d + α_{t,d})·w_d` and the reports built
//! on it.
//!
//! The prediction decomposes exactly over input cells:
//! `ŷ = σ(Σ_t Σ_d FI[t][d]·x_{t,d} + b)` (no sigmoid for regression).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Preprocessor};
use crate::error::{Error, Result};
use crate::model::{forward, ForwardTrace, ModelConfig, Parameters, Task};
use crate::scalar::Scalar;
use crate::tensor::{sigmoid, Shape, Tensor};

/// `T×D` matrix of feature importances for one traced sample.
pub fn feature_importance<T: Scalar>(trace: &ForwardTrace<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let d_len = w.len();
    if trace.beta.len() != d_len {
        return Err(Error::Dimension {
            op: "feature_importance",
            left: trace.beta.shape(),
            right: w.shape(),
        });
    }
    let mut out = Vec::with_capacity(trace.alpha.len() * d_len);
    for alpha in &trace.alpha {
        for d in 0..d_len {
            out.push((trace.beta.data()[d] + alpha.data()[d]) * w.data()[d]);
        }
    }
    Tensor::new(Shape::Matrix(trace.alpha.len(), d_len), out)
}

/// Prediction rebuilt from importances: `σ(Σ FI⊙X + b)`, or the bare sum
/// for regression.
pub fn reconstruct_prediction<T: Scalar>(
    fi: &Tensor<T>,
    x: &Tensor<T>,
    b: T,
    task: Task,
) -> Result<T> {
    let z = fi.hadamard(x)?.sum() + b;
    Ok(match task {
        Task::Classification => sigmoid(z),
        Task::Regression => z,
    })
}

/// Trace and importances of one model input.
pub fn explain<T: Scalar>(
    x: &Tensor<T>,
    params: &Parameters<T>,
    config: &ModelConfig,
) -> Result<(ForwardTrace<T>, Tensor<T>)> {
    let trace = forward(x, params, config)?;
    let fi = feature_importance(&trace, &params.w_out)?;
    Ok((trace, fi))
}

/// One exported cell. `t` and `d` are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportanceRecord {
    pub sample_id: String,
    pub t: usize,
    pub d: usize,
    pub feature_name: String,
    pub fi_value: f64,
    pub input_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientReport {
    pub sample_id: String,
    pub y_hat: f64,
    /// Grouped by requested feature, then by window.
    pub records: Vec<FeatureImportanceRecord>,
}

/// Trained model together with the preprocessing it was fitted with.
#[derive(Clone, Copy, Debug)]
pub struct Explainer<'a> {
    pub params: &'a Parameters<f64>,
    pub config: &'a ModelConfig,
    pub preprocessor: &'a Preprocessor,
}

impl Explainer<'_> {
    fn explain_sample(
        &self,
        ds: &Dataset,
        index: usize,
    ) -> Result<(Tensor<f64>, ForwardTrace<f64>, Tensor<f64>)> {
        let x = self.preprocessor.transform(&ds.samples[index]);
        let (trace, fi) = explain(&x, self.params, self.config)?;
        Ok((x, trace, fi))
    }

    /// FI series of the requested features (all when `features` is empty)
    /// for one sample.
    pub fn patient_report(
        &self,
        ds: &Dataset,
        sample_id: &str,
        features: &[String],
    ) -> Result<PatientReport> {
        let i = ds.sample_index(sample_id)?;
        let ds_idx: Vec<usize> = if features.is_empty() {
            (0..ds.features()).collect()
        } else {
            features
                .iter()
                .map(|f| ds.feature_index(f))
                .collect::<Result<_>>()?
        };
        let (x, trace, fi) = self.explain_sample(ds, i)?;
        let mut records = Vec::with_capacity(ds_idx.len() * ds.windows);
        for &d in &ds_idx {
            for t in 0..ds.windows {
                records.push(FeatureImportanceRecord {
                    sample_id: sample_id.to_string(),
                    t: t + 1,
                    d: d + 1,
                    feature_name: ds.feature_names[d].clone(),
                    fi_value: fi.get(t, d),
                    input_value: x.get(t, d),
                });
            }
        }
        Ok(PatientReport {
            sample_id: sample_id.to_string(),
            y_hat: trace.y_hat,
            records,
        })
    }

    /// Per-window FI series of `feature` for each sample in `indices`.
    pub fn feature_series(
        &self,
        ds: &Dataset,
        indices: &[usize],
        d: usize,
    ) -> Result<Vec<Vec<f64>>> {
        indices
            .iter()
            .map(|&i| {
                let (_, _, fi) = self.explain_sample(ds, i)?;
                Ok((0..ds.windows).map(|t| fi.get(t, d)).collect())
            })
            .collect()
    }

    pub fn feature_report(
        &self,
        ds: &Dataset,
        indices: &[usize],
        feature: &str,
        include_points: bool,
    ) -> Result<FeatureLevelReport> {
        let d = ds.feature_index(feature)?;
        let series = self.feature_series(ds, indices, d)?;
        let mut report = summarize_feature(d + 1, feature, &series)?;
        if include_points {
            let mut points = Vec::with_capacity(series.len() * ds.windows);
            for (&i, s) in indices.iter().zip(&series) {
                let x = self.preprocessor.transform(&ds.samples[i]);
                for (t, &v) in s.iter().enumerate() {
                    points.push(FeatureImportanceRecord {
                        sample_id: ds.samples[i].id.clone(),
                        t: t + 1,
                        d: d + 1,
                        feature_name: feature.to_string(),
                        fi_value: v,
                        input_value: x.get(t, d),
                    });
                }
            }
            report.points = Some(points);
        }
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub t: usize,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLevelReport {
    /// 1-based feature index.
    pub feature_id: usize,
    pub feature_name: String,
    pub windows: Vec<WindowSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<FeatureImportanceRecord>>,
}

/// Nearest-rank quantile of sorted data: element `⌈p·n⌉` (1-based).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Per-window summaries of `series` (one FI series per sample).
pub fn summarize_feature(
    feature_id: usize,
    feature_name: &str,
    series: &[Vec<f64>],
) -> Result<FeatureLevelReport> {
    let Some(first) = series.first() else {
        return Err(Error::Contract(
            "feature-level report over an empty sample set".into(),
        ));
    };
    let t_len = first.len();
    let mut windows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut col: Vec<f64> = series.iter().map(|s| s[t]).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        col.sort_by(f64::total_cmp);
        windows.push(WindowSummary {
            t: t + 1,
            count: col.len(),
            mean,
            std: var.sqrt(),
            q05: nearest_rank(&col, 0.05),
            q25: nearest_rank(&col, 0.25),
            q50: nearest_rank(&col, 0.5),
            q75: nearest_rank(&col, 0.75),
            q95: nearest_rank(&col, 0.95),
        });
    }
    Ok(FeatureLevelReport {
        feature_id,
        feature_name: feature_name.to_string(),
        windows,
        points: None,
    })
}

/// 17 significant digits; parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad {what} `{s}`")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad {what} `{s}`")))
}

const RECORD_HEADER: [&str; 6] = [
    "sample_id",
    "t",
    "d",
    "feature_name",
    "fi_value",
    "input_value",
];
const SUMMARY_HEADER: [&str; 9] = [
    "t", "count", "mean", "std", "q05", "q25", "q50", "q75", "q95",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_records_csv(records: &[FeatureImportanceRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RECORD_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.t.to_string(),
            r.d.to_string(),
            r.feature_name.clone(),
            format_f64(r.fi_value),
            format_f64(r.input_value),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<FeatureImportanceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Format(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            Ok(FeatureImportanceRecord {
                sample_id: row[0].to_string(),
                t: parse_usize(&row[1], "t")?,
                d: parse_usize(&row[2], "d")?,
                feature_name: row[3].to_string(),
                fi_value: parse_f64(&row[4], "fi_value")?,
                input_value: parse_f64(&row[5], "input_value")?,
            })
        })
        .collect()
}

pub fn write_summary_csv(report: &FeatureLevelReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SUMMARY_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for s in &report.windows {
        let mut row = vec![s.t.to_string(), s.count.to_string()];
        row.extend([s.mean, s.std, s.q05, s.q25, s.q50, s.q75, s.q95].map(format_f64));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<WindowSummary>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Format(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    r.records()
        .map(|row| {
            let row = row.map_err(|e| csv_err(path, e))?;
            let f = |k: usize| parse_f64(&row[k], SUMMARY_HEADER[k]);
            Ok(WindowSummary {
                t: parse_usize(&row[0], "t")?,
                count: parse_usize(&row[1], "count")?,
                mean: f(2)?,
                std: f(3)?,
                q05: f(4)?,
                q25: f(5)?,
                q50: f(6)?,
                q75: f(7)?,
                q95: f(8)?,
            })
        })
        .collect()
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
