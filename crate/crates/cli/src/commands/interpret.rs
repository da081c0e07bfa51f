use std::path::PathBuf;

use serde::Serialize;
use titv_core::data::load_dataset;
use titv_core::interpret::{write_json, write_records_csv, write_summary_csv, Explainer};
use titv_core::train::{Checkpoint, SplitName};
use titv_core::Error;

use super::{emit, emit_path, file_safe, Context, Outcome};
use crate::args::{Format, InterpretArgs, Mode};
use crate::manifest::Run;

#[derive(Serialize)]
struct InterpretRun<'a> {
    mode: Mode,
    sample: &'a Option<String>,
    features: &'a [String],
    feature: &'a Option<String>,
    split: SplitName,
    format: Format,
    points: bool,
}

pub fn interpret(ctx: &Context, a: &InterpretArgs) -> Outcome {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    ck.schema.check(&ds)?;
    let params = ck.parameters()?;
    let ex = Explainer {
        params: &params,
        config: &ck.model,
        preprocessor: &ck.preprocessor,
    };
    let cfg = InterpretRun {
        mode: a.mode,
        sample: &a.sample,
        features: &a.features,
        feature: &a.feature,
        split: a.split,
        format: a.format,
        points: a.points,
    };
    let inputs = [a.checkpoint.as_path(), a.data.as_path()];
    let mut run = Run::start(
        "interpret",
        &ctx.argv,
        &cfg,
        &inputs,
        &ctx.out_dir,
        ctx.threads,
    )?;
    let ext = match a.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut written: Vec<PathBuf> = Vec::new();
    match a.mode {
        Mode::Patient => {
            let id = a
                .sample
                .as_deref()
                .ok_or_else(|| Error::Config("--mode patient needs --sample".into()))?;
            let report = ex.patient_report(&ds, id, &a.features)?;
            let path = run.artifact(&format!("patient.{}.{ext}", file_safe(id)));
            match a.format {
                Format::Csv => write_records_csv(&report.records, &path)?,
                Format::Json => write_json(&report, &path)?,
            }
            println!(
                "sample {id}: prediction {:.6}, {} importance records",
                report.y_hat,
                report.records.len()
            );
            emit("y_hat", report.y_hat);
            emit("records", report.records.len());
            written.push(path);
        }
        Mode::Feature => {
            let name = a
                .feature
                .as_deref()
                .ok_or_else(|| Error::Config("--mode feature needs --feature".into()))?;
            let indices = ck.split(&ds)?.select(a.split);
            let report = ex.feature_report(&ds, &indices, name, a.points)?;
            let stem = format!("feature.{}", file_safe(name));
            let path = run.artifact(&format!("{stem}.{ext}"));
            match a.format {
                Format::Csv => {
                    write_summary_csv(&report, &path)?;
                    if let Some(points) = &report.points {
                        let p = run.artifact(&format!("{stem}.points.csv"));
                        write_records_csv(points, &p)?;
                        written.push(p);
                    }
                }
                Format::Json => write_json(&report, &path)?,
            }
            println!(
                "feature {name}: {} windows summarized over {} {} samples",
                report.windows.len(),
                indices.len(),
                a.split
            );
            emit("windows", report.windows.len());
            emit("samples", indices.len());
            written.insert(0, path);
        }
    }
    let id = run.id.clone();
    let manifest = run.finish()?;
    emit("run_id", id);
    for p in &written {
        emit_path("output", p);
    }
    emit_path("manifest", &manifest);
    Ok(())
}
