//! Raw event ingestion into fixed time windows.
//!
//! Event CSV: `entity_id,timestamp,feature,value` (integer seconds).
//! Label CSV: `entity_id,window_start,label`, where `window_start` is the
//! first second of the entity's feature window.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tensor::{Shape, Tensor};

use super::{Dataset, Sample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub entity_id: String,
    pub timestamp: i64,
    pub feature: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub entity_id: String,
    pub window_start: i64,
    pub label: f64,
}

/// Feature window split into `T` equal, half-open time windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub feature_window_length: i64,
    pub window_length: i64,
}

impl WindowSpec {
    pub fn new(feature_window_length: i64, window_length: i64) -> Result<Self> {
        if window_length <= 0 || feature_window_length <= 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if feature_window_length % window_length != 0 {
            return Err(Error::Config(format!(
                "feature window {feature_window_length}s is not a multiple of window {window_length}s"
            )));
        }
        Ok(WindowSpec {
            feature_window_length,
            window_length,
        })
    }

    pub fn window_count(&self) -> usize {
        (self.feature_window_length / self.window_length) as usize
    }
}

/// Averages events of one entity into a `T×D` matrix and its mask. Window
/// `t` covers `[start + t·w, start + (t+1)·w)`, oldest first.
pub fn windowize(
    events: &[RawEvent],
    spec: WindowSpec,
    start: i64,
    features: &[String],
) -> Result<(Tensor<f64>, Vec<bool>)> {
    let t_len = spec.window_count();
    let d_len = features.len();
    let index: BTreeMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); t_len * d_len];
    for e in events {
        let d = *index.get(e.feature.as_str()).ok_or_else(|| {
            Error::Ingestion(format!(
                "unknown feature `{}` for entity `{}`",
                e.feature, e.entity_id
            ))
        })?;
        if !e.value.is_finite() {
            return Err(Error::Ingestion(format!(
                "non-finite value for entity `{}` feature `{}`",
                e.entity_id, e.feature
            )));
        }
        let offset = e.timestamp - start;
        if offset < 0 || offset >= spec.feature_window_length {
            return Err(Error::Ingestion(format!(
                "event at {} for entity `{}` lies outside its feature window [{start}, {})",
                e.timestamp,
                e.entity_id,
                start + spec.feature_window_length
            )));
        }
        let t = (offset / spec.window_length) as usize;
        cells[t * d_len + d].push(e.value);
    }
    let mut values = Vec::with_capacity(t_len * d_len);
    let mut mask = Vec::with_capacity(t_len * d_len);
    for mut c in cells {
        if c.is_empty() {
            values.push(0.0);
            mask.push(false);
        } else {
            // order-independent sum
            c.sort_by(f64::total_cmp);
            values.push(c.iter().sum::<f64>() / c.len() as f64);
            mask.push(true);
        }
    }
    Ok((Tensor::new(Shape::Matrix(t_len, d_len), values)?, mask))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))
}

fn check_header(rdr: &mut csv::Reader<std::fs::File>, path: &Path, want: &[&str]) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(Error::Ingestion(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            got,
            want
        )));
    }
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<RawEvent>> {
    let mut rdr = open_csv(path)?;
    check_header(
        &mut rdr,
        path,
        &["entity_id", "timestamp", "feature", "value"],
    )?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Ingestion(format!("{} row {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, &["entity_id", "window_start", "label"])?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Ingestion(format!("{} row {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

/// Builds a dataset from events and labels. When `features` is `None` the
/// feature map is the sorted set of feature names seen in `events`.
/// Samples follow the order of `labels`; events of unlabelled entities are
/// ignored.
pub fn ingest(
    events: &[RawEvent],
    labels: &[LabelRow],
    spec: WindowSpec,
    features: Option<Vec<String>>,
    task: Task,
) -> Result<Dataset> {
    let features = match features {
        Some(f) => f,
        None => events
            .iter()
            .map(|e| e.feature.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut by_entity: BTreeMap<&str, Vec<RawEvent>> = BTreeMap::new();
    for e in events {
        by_entity
            .entry(e.entity_id.as_str())
            .or_default()
            .push(e.clone());
    }
    let mut samples = Vec::with_capacity(labels.len());
    for row in labels {
        let evs = by_entity
            .get(row.entity_id.as_str())
            .map_or(&[][..], Vec::as_slice);
        let (values, mask) = windowize(evs, spec, row.window_start, &features)?;
        samples.push(Sample {
            id: row.entity_id.clone(),
            values,
            mask,
            label: row.label,
        });
    }
    let ds = Dataset {
        feature_names: features,
        windows: spec.window_count(),
        task,
        samples,
        preprocessing: None,
        ground_truth: None,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(ts: i64, f: &str, v: f64) -> RawEvent {
        RawEvent {
            entity_id: "p1".into(),
            timestamp: ts,
            feature: f.into(),
            value: v,
        }
    }

    fn feats() -> Vec<String> {
        vec!["urea".into(), "hba1c".into()]
    }

    #[test]
    fn window_spec_requires_exact_division() {
        assert_eq!(WindowSpec::new(7 * 86400, 86400).unwrap().window_count(), 7);
        assert!(WindowSpec::new(100, 30).is_err());
    }

    #[test]
    fn averages_events_in_a_cell() {
        let spec = WindowSpec::new(20, 10).unwrap();
        let (v, m) =
            windowize(&[ev(1, "urea", 2.0), ev(5, "urea", 4.0)], spec, 0, &feats()).unwrap();
        assert_eq!(v.get(0, 0), 3.0);
        assert!(m[0]);
        assert!(!m[1] && !m[2] && !m[3]);
    }

    #[test]
    fn boundary_goes_to_later_window() {
        let spec = WindowSpec::new(20, 10).unwrap();
        let (v, m) = windowize(&[ev(10, "hba1c", 6.5)], spec, 0, &feats()).unwrap();
        assert!(m[3] && !m[1]);
        assert_eq!(v.get(1, 1), 6.5);
    }

    #[test]
    fn unknown_feature_is_named() {
        let spec = WindowSpec::new(20, 10).unwrap();
        let err = windowize(&[ev(1, "creatinine", 1.0)], spec, 0, &feats()).unwrap_err();
        assert!(err.to_string().contains("creatinine"));
    }

    #[test]
    fn out_of_window_event_is_rejected() {
        let spec = WindowSpec::new(20, 10).unwrap();
        assert!(windowize(&[ev(20, "urea", 1.0)], spec, 0, &feats()).is_err());
        assert!(windowize(&[ev(-1, "urea", 1.0)], spec, 0, &feats()).is_err());
    }

    #[test]
    fn event_order_does_not_matter() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let spec = WindowSpec::new(40, 10).unwrap();
        let mut events: Vec<RawEvent> = (0..60)
            .map(|_| {
                let f = if rng.random_bool(0.5) {
                    "urea"
                } else {
                    "hba1c"
                };
                ev(rng.random_range(0..40), f, rng.random_range(-5.0..5.0))
            })
            .collect();
        let base = windowize(&events, spec, 0, &feats()).unwrap();
        for _ in 0..10 {
            events.shuffle(&mut rng);
            assert_eq!(windowize(&events, spec, 0, &feats()).unwrap(), base);
        }
    }

    #[test]
    fn ingest_from_csv_files() {
        let dir = tempfile::tempdir().unwrap();
        let ep = dir.path().join("events.csv");
        let lp = dir.path().join("labels.csv");
        std::fs::write(
            &ep,
            "entity_id,timestamp,feature,value\na,100,urea,3\na,115,urea,5\nb,205,hba1c,7\nzz,0,urea,1\n",
        )
        .unwrap();
        std::fs::write(&lp, "entity_id,window_start,label\na,100,1\nb,200,0\n").unwrap();
        let events = read_events(&ep).unwrap();
        let labels = read_labels(&lp).unwrap();
        let ds = ingest(
            &events,
            &labels,
            WindowSpec::new(20, 10).unwrap(),
            None,
            Task::Classification,
        )
        .unwrap();
        assert_eq!(ds.feature_names, vec!["hba1c".to_string(), "urea".into()]);
        assert_eq!(ds.windows, 2);
        assert_eq!(ds.samples[0].values.get(0, 1), 3.0);
        assert_eq!(ds.samples[0].values.get(1, 1), 5.0);
        assert_eq!(ds.samples[1].values.get(0, 0), 7.0);
        assert_eq!(ds.samples[1].label, 0.0);

        std::fs::write(&ep, "entity,timestamp,feature,value\n").unwrap();
        assert!(read_events(&ep).is_err());
    }
}
