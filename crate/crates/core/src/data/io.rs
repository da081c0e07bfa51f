//! Dataset file format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "TITVDSET"
//! 8       4     format version, u32 little-endian
//! 12      8     header length L, u64 little-endian
//! 20      L     UTF-8 JSON header
//! 20+L    ...   payload, one record per sample in header order:
//!                 label       f64 LE
//!                 values      T·D f64 LE, row-major
//!                 mask        T·D bytes, 1 = observed
//! ```
//!
//! The header carries the task, `T`, the declared `D`, feature names,
//! sample ids, fitted preprocessing, planted ground truth and the payload
//! length in bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tensor::{Shape, Tensor};

use super::{Dataset, GroundTruth, Preprocessor, Sample};

pub const DATASET_MAGIC: &[u8; 8] = b"TITVDSET";
pub const DATASET_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct Header {
    task: Task,
    windows: usize,
    features: usize,
    feature_names: Vec<String>,
    sample_ids: Vec<String>,
    preprocessing: Option<Preprocessor>,
    ground_truth: Option<GroundTruth>,
    payload_bytes: u64,
}

fn record_bytes(cells: usize) -> usize {
    8 + cells * 8 + cells
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let cells = ds.windows * ds.features();
    let payload_len = ds.len() * record_bytes(cells);
    let header = Header {
        task: ds.task,
        windows: ds.windows,
        features: ds.features(),
        feature_names: ds.feature_names.clone(),
        sample_ids: ds.samples.iter().map(|s| s.id.clone()).collect(),
        preprocessing: ds.preprocessing.clone(),
        ground_truth: ds.ground_truth.clone(),
        payload_bytes: payload_len as u64,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + payload_len);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for s in &ds.samples {
        out.extend_from_slice(&s.label.to_le_bytes());
        for v in s.values.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(s.mask.iter().map(|&m| m as u8));
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::Format("dataset file is empty".into()));
    }
    if bytes.len() < PREAMBLE || &bytes[..8] != DATASET_MAGIC {
        return Err(Error::Format(
            "not a dataset file (bad magic or short preamble)".into(),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "dataset format version {version} is not supported (expected {DATASET_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[PREAMBLE..];
    if body.len() < header_len {
        return Err(Error::Format(format!(
            "truncated header: {header_len} bytes declared, {} present",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..header_len])
        .map_err(|e| Error::Format(format!("dataset header: {e}")))?;
    if header.features != header.feature_names.len() {
        return Err(Error::Schema(format!(
            "header declares D = {} but lists {} feature names",
            header.features,
            header.feature_names.len()
        )));
    }
    if let Some(p) = &header.preprocessing {
        if p.normalizer.min.len() != header.features || p.train_means.len() != header.features {
            return Err(Error::Schema(format!(
                "preprocessing statistics cover {} features, dataset declares D = {}",
                p.normalizer.min.len(),
                header.features
            )));
        }
    }
    let payload = &body[header_len..];
    let cells = header.windows * header.features;
    let expected = header.sample_ids.len() * record_bytes(cells);
    if header.payload_bytes as usize != expected {
        return Err(Error::Schema(format!(
            "payload length {} does not match {} samples of T = {}, D = {} ({expected} bytes)",
            header.payload_bytes,
            header.sample_ids.len(),
            header.windows,
            header.features
        )));
    }
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {expected} (truncated or trailing data)",
            payload.len()
        )));
    }
    let shape = Shape::Matrix(header.windows, header.features);
    let rec = record_bytes(cells);
    let mut samples = Vec::with_capacity(header.sample_ids.len());
    for (i, id) in header.sample_ids.into_iter().enumerate() {
        let r = &payload[i * rec..(i + 1) * rec];
        let label = f64::from_le_bytes(r[..8].try_into().expect("8 bytes"));
        let values = r[8..8 + cells * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut mask = Vec::with_capacity(cells);
        for &b in &r[8 + cells * 8..] {
            match b {
                0 => mask.push(false),
                1 => mask.push(true),
                _ => return Err(Error::Format(format!("sample `{id}` has mask byte {b}"))),
            }
        }
        samples.push(Sample {
            id,
            values: Tensor::new(shape, values)?,
            mask,
            label,
        });
    }
    let ds = Dataset {
        feature_names: header.feature_names,
        windows: header.windows,
        task: header.task,
        samples,
        preprocessing: header.preprocessing,
        ground_truth: header.ground_truth,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, Schedule, SynthSpec};

    fn small() -> Dataset {
        let mut spec = SynthSpec::with_schedules(
            20,
            3,
            &[Schedule::Ramp, Schedule::Constant, Schedule::Spike(2)],
            4,
        );
        spec.missing_rate = 0.2;
        let mut ds = synth_generate(&spec).unwrap();
        let refs: Vec<&Sample> = ds.samples.iter().take(10).collect();
        ds.preprocessing = Some(Preprocessor::fit(&refs, 3).unwrap());
        ds
    }

    fn bits(ds: &Dataset) -> Vec<u64> {
        ds.samples
            .iter()
            .flat_map(|s| std::iter::once(s.label).chain(s.values.data().iter().copied()))
            .map(f64::to_bits)
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.titv");
        save_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(bits(&back), bits(&ds));
        let pa = ds.preprocessing.as_ref().unwrap();
        let pb = back.preprocessing.as_ref().unwrap();
        for (a, b) in pa.train_means.iter().zip(&pb.train_means) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_file_is_a_format_error() {
        assert!(matches!(decode_dataset(&[]), Err(Error::Format(_))));
        assert!(matches!(decode_dataset(b"TITV"), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_dataset(&small()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 30] {
            assert!(decode_dataset(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_dataset(&small()).unwrap();
        bytes[8] = 9;
        let err = decode_dataset(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }

    fn rewrite_header(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + len]).unwrap();
        edit(&mut header);
        let json = serde_json::to_vec(&header).unwrap();
        let mut out = bytes[..12].to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&bytes[20 + len..]);
        out
    }

    #[test]
    fn declared_width_mismatch_names_discrepancy() {
        let mut ds = small();
        ds.preprocessing = None;
        let mut names = ds.feature_names.clone();
        names.push("extra".into());
        // four names listed, three declared
        let bytes = rewrite_header(&encode_dataset(&ds).unwrap(), |h| {
            h["feature_names"] = serde_json::json!(names);
        });
        let err = decode_dataset(&bytes).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let msg = err.to_string();
        assert!(
            msg.contains("D = 3") && msg.contains("4 feature names"),
            "{msg}"
        );
    }

    #[test]
    fn payload_length_must_match_shape() {
        let bytes = rewrite_header(&encode_dataset(&small()).unwrap(), |h| {
            h["windows"] = serde_json::json!(4);
        });
        assert!(matches!(decode_dataset(&bytes), Err(Error::Schema(_))));
    }
}
