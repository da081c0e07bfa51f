//! Losses and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::autodiff::probability_clamp;
use crate::error::{Error, Result};

/// `-y ln ŷ - (1-y) ln(1-ŷ)` with `ŷ` clamped to `[1e-12, 1-1e-12]`.
pub fn cross_entropy(y_hat: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Contract(format!(
            "cross-entropy label must be 0 or 1, got {y}"
        )));
    }
    let eps = probability_clamp::<f64>();
    let p = y_hat.clamp(eps, 1.0 - eps);
    Ok(-y * p.ln() - (1.0 - y) * (1.0 - p).ln())
}

pub fn squared_error(y_hat: f64, y: f64) -> f64 {
    (y_hat - y) * (y_hat - y)
}

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Runs in `O(n log n)` via midranks.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "roc_auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Contract(format!("roc_auc: label {bad} is not 0/1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("roc_auc: NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks (1-based) of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Classification only; `None` when a split holds a single class.
    pub auc: Option<f64>,
    /// Mean cross-entropy per sample (classification).
    pub cel: Option<f64>,
    /// Mean squared error (regression).
    pub mse: Option<f64>,
    pub sample_count: usize,
}

impl MetricsReport {
    pub fn classification(scores: &[f64], labels: &[f64]) -> Result<Self> {
        let auc = match roc_auc(scores, labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let mut total = 0.0;
        for (&s, &y) in scores.iter().zip(labels) {
            total += cross_entropy(s, y)?;
        }
        Ok(MetricsReport {
            auc,
            cel: Some(total / scores.len() as f64),
            mse: None,
            sample_count: scores.len(),
        })
    }

    pub fn regression(preds: &[f64], targets: &[f64]) -> Self {
        let total: f64 = preds
            .iter()
            .zip(targets)
            .map(|(&p, &y)| squared_error(p, y))
            .sum();
        MetricsReport {
            auc: None,
            cel: None,
            mse: Some(total / preds.len().max(1) as f64),
            sample_count: preds.len(),
        }
    }
}

/// Spearman rank correlation with midranks for ties. Returns 0 when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = midranks(a);
    let rb = midranks(b);
    pearson(&ra, &rb)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}
