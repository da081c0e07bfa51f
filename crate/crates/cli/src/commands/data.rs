use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use titv_core::data::{
    ingest as build, read_events, read_labels, save_dataset, synth_generate, SynthSpec, WindowSpec,
};
use titv_core::model::Task;
use titv_core::{Error, Result};

use super::{emit, emit_path, Context, Outcome};
use crate::args::{IngestArgs, SynthArgs};
use crate::manifest::Run;

fn positives(labels: impl Iterator<Item = f64>) -> usize {
    labels.filter(|&y| y == 1.0).count()
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Outcome {
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::Io {
        path: a.spec.clone(),
        source: e,
    })?;
    let mut spec = SynthSpec::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", a.spec.display())),
        other => other,
    })?;
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let mut run = Run::start("synth", &ctx.argv, &spec, &[], &ctx.out_dir, ctx.threads)?;
    let path = match &a.out {
        Some(p) => {
            run.add(p.clone());
            p.clone()
        }
        None => run.artifact("titv"),
    };
    let ds = synth_generate(&spec)?;
    save_dataset(&ds, &path)?;
    let truth = path.with_extension("truth.json");
    let json =
        serde_json::to_string_pretty(&ds.ground_truth).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&truth, json).map_err(|e| Error::Io {
        path: truth.clone(),
        source: e,
    })?;
    run.add(truth.clone());

    eprintln!(
        "generated {} samples, T={}, D={}",
        ds.len(),
        ds.windows,
        ds.features()
    );
    let pos = positives(ds.samples.iter().map(|s| s.label));
    if spec.task == Task::Classification {
        println!(
            "{} samples ({pos} positive) written to {}",
            ds.len(),
            path.display()
        );
    } else {
        println!("{} samples written to {}", ds.len(), path.display());
    }
    let id = run.id.clone();
    let manifest = run.finish()?;
    emit("run_id", id);
    emit("samples", ds.len());
    emit("windows", ds.windows);
    emit("features", ds.features());
    emit_path("dataset", &path);
    emit_path("ground_truth", &truth);
    emit_path("manifest", &manifest);
    Ok(())
}

#[derive(Serialize)]
struct IngestConfig<'a> {
    feature_window: i64,
    window: i64,
    features: &'a Option<Vec<String>>,
    task: Task,
}

pub fn ingest(ctx: &Context, a: &IngestArgs) -> Outcome {
    let spec = WindowSpec::new(a.feature_window, a.window)?;
    let cfg = IngestConfig {
        feature_window: a.feature_window,
        window: a.window,
        features: &a.features,
        task: a.task,
    };
    let inputs = [a.events.as_path(), a.labels.as_path()];
    let mut run = Run::start(
        "ingest",
        &ctx.argv,
        &cfg,
        &inputs,
        &ctx.out_dir,
        ctx.threads,
    )?;
    let path: PathBuf = match &a.out {
        Some(p) => {
            run.add(p.clone());
            p.clone()
        }
        None => run.artifact("titv"),
    };
    let ds = load(a, spec)?;
    save_dataset(&ds, &path)?;
    println!(
        "{} samples over {} windows and {} features written to {}",
        ds.len(),
        ds.windows,
        ds.features(),
        path.display()
    );
    let id = run.id.clone();
    let manifest = run.finish()?;
    emit("run_id", id);
    emit("samples", ds.len());
    emit("windows", ds.windows);
    emit("features", ds.features());
    emit_path("dataset", &path);
    emit_path("manifest", &manifest);
    Ok(())
}

fn load(a: &IngestArgs, spec: WindowSpec) -> Result<titv_core::data::Dataset> {
    let events = read_events(&a.events)?;
    let labels = read_labels(&a.labels)?;
    eprintln!("read {} events and {} labels", events.len(), labels.len());
    build(&events, &labels, spec, a.features.clone(), a.task)
}
