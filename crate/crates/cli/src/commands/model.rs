use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use titv_core::baseline::{
    aggregate, per_window_lr, train_lr, write_coefficients_csv, LrConfig, LrModel, PerWindowLr,
};
use titv_core::data::{load_dataset, Dataset, Preprocessor};
use titv_core::interpret::format_f64;
use titv_core::metrics::MetricsReport;
use titv_core::model::{ModelConfig, Task};
use titv_core::train::{
    self as fit, split_dataset, Checkpoint, EpochRecord, SplitName, TrainConfig,
};
use titv_core::{Error, Result};

use super::{emit, emit_path, opt, Context, Outcome};
use crate::args::{BaselineArgs, EvaluateArgs, TrainArgs};
use crate::config::patience_from;
use crate::manifest::Run;

#[derive(Serialize)]
struct TrainRun<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn resolve(ctx: &Context, a: &TrainArgs, ds: &Dataset) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::new(ds.features(), ds.windows).with_task(ds.task);
    let m = &ctx.file.model;
    model.rnn_dim = a.rnn_dim.or(m.rnn_dim).unwrap_or(model.rnn_dim);
    model.film_dim = a.film_dim.or(m.film_dim).unwrap_or(model.film_dim);
    model.variant = a.variant.or(m.variant).unwrap_or(model.variant);
    model.validate()?;

    let mut cfg = TrainConfig::default();
    ctx.file.train.apply(&mut cfg);
    macro_rules! flag {
        ($($arg:ident => $field:ident),*) => {$(if let Some(v) = a.$arg { cfg.$field = v; })*};
    }
    flag!(lr => learning_rate, weight_decay => weight_decay, epochs => max_epochs, batch_size => batch_size,
        optimizer => optimizer, pos_weight => pos_weight, train_fraction => train_fraction,
        val_fraction => val_fraction);
    if let Some(p) = a.patience {
        cfg.patience = patience_from(p);
    }
    if a.monitor.is_some() {
        cfg.monitor = a.monitor;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.threads = ctx.threads;
    cfg.validate()?;
    Ok((model, cfg))
}

fn epoch_line(r: &EpochRecord) -> String {
    format!(
        "epoch {:>3}  train_loss {:.5}  val_loss {:.5}  val_auc {}",
        r.epoch,
        r.train_loss,
        r.val_loss,
        r.val_auc.map_or_else(|| "na".into(), |v| format!("{v:.4}"))
    )
}

fn print_metrics(prefix: &str, m: &MetricsReport) {
    match (m.auc, m.cel, m.mse) {
        (_, _, Some(mse)) => println!("{prefix}: MSE {mse:.6} over {} samples", m.sample_count),
        (auc, cel, _) => println!(
            "{prefix}: AUC {}, CEL {} over {} samples",
            auc.map_or_else(|| "undefined".into(), |v| format!("{v:.4}")),
            cel.map_or_else(|| "na".into(), |v| format!("{v:.5}")),
            m.sample_count
        ),
    }
    emit(&format!("{prefix}_auc"), opt(m.auc));
    emit(&format!("{prefix}_cel"), opt(m.cel));
    emit(&format!("{prefix}_mse"), opt(m.mse));
    emit(&format!("{prefix}_samples"), m.sample_count);
}

#[derive(Serialize)]
struct FinalLine<'a> {
    split: &'a str,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Outcome {
    let ds = load_dataset(&a.data)?;
    let (model, cfg) = resolve(ctx, a, &ds)?;
    let resolved = TrainRun {
        model: &model,
        train: &cfg,
    };
    let mut run = Run::start(
        "train",
        &ctx.argv,
        &resolved,
        &[&a.data],
        &ctx.out_dir,
        ctx.threads,
    )?;
    eprintln!(
        "training {} on {} samples (T={}, D={}), run {}",
        model.variant,
        ds.len(),
        ds.windows,
        ds.features(),
        run.id
    );
    let outcome = fit::train(&ds, &model, &cfg, |r| eprintln!("{}", epoch_line(r)))?;
    let (_, test) = fit::evaluate(
        &outcome.params,
        &model,
        &ds,
        &outcome.preprocessor,
        &outcome.split.test,
        ctx.threads,
    )?;

    let ck_path = run.artifact("checkpoint.json");
    Checkpoint::new(&outcome, &model, &cfg, &ds).save(&ck_path)?;
    let log_path = run.artifact("metrics.jsonl");
    let mut log = Vec::new();
    for r in &outcome.history {
        writeln!(log, "{}", json_line(r)?).map_err(io_err(&log_path))?;
    }
    let last = FinalLine {
        split: "test",
        metrics: &test,
    };
    writeln!(log, "{}", json_line(&last)?).map_err(io_err(&log_path))?;
    fs::write(&log_path, log).map_err(io_err(&log_path))?;

    println!(
        "best epoch {} of {} ({}){}",
        outcome.best_epoch,
        outcome.history.len(),
        match outcome.monitor {
            fit::Monitor::ValAuc => "val_auc",
            fit::Monitor::ValLoss => "val_loss",
        },
        if outcome.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    let id = run.id.clone();
    let manifest = run.finish()?;
    print_metrics("test", &test);
    emit("run_id", id);
    emit("best_epoch", outcome.best_epoch);
    emit("epochs", outcome.history.len());
    emit_path("checkpoint", &ck_path);
    emit_path("metrics_log", &log_path);
    emit_path("manifest", &manifest);
    Ok(())
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Serialize)]
struct EvaluateRun {
    split: SplitName,
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Outcome {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    ck.schema.check(&ds)?;
    let params = ck.parameters()?;
    let indices = ck.split(&ds)?.select(a.split);
    let cfg = EvaluateRun { split: a.split };
    let inputs = [a.checkpoint.as_path(), a.data.as_path()];
    let mut run = Run::start(
        "evaluate",
        &ctx.argv,
        &cfg,
        &inputs,
        &ctx.out_dir,
        ctx.threads,
    )?;
    let (preds, report) = fit::evaluate(
        &params,
        &ck.model,
        &ds,
        &ck.preprocessor,
        &indices,
        ctx.threads,
    )?;

    let path = run.artifact("predictions.csv");
    let mut out = String::from("sample_id,label,prediction\n");
    for (&i, p) in indices.iter().zip(&preds) {
        let s = &ds.samples[i];
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&s.id),
            s.label,
            format_f64(*p)
        ));
    }
    fs::write(&path, out).map_err(io_err(&path))?;
    let id = run.id.clone();
    let manifest = run.finish()?;
    print_metrics(&a.split.to_string(), &report);
    emit("run_id", id);
    emit_path("predictions", &path);
    emit_path("manifest", &manifest);
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct BaselineRun<'a> {
    lr: &'a LrConfig,
    train_fraction: f64,
    val_fraction: f64,
}

#[derive(Serialize)]
struct BaselineReport<'a> {
    aggregated: &'a LrModel,
    test: &'a MetricsReport,
    per_window: &'a PerWindowLr,
}

pub fn baseline(ctx: &Context, a: &BaselineArgs) -> Outcome {
    let ds = load_dataset(&a.data)?;
    if ds.task != Task::Classification {
        return Err(Error::Config("baselines need a classification dataset".into()).into());
    }
    let mut split_cfg = TrainConfig::default();
    ctx.file.train.apply(&mut split_cfg);
    let mut lr = LrConfig::default();
    ctx.file.baseline.apply(&mut lr);
    macro_rules! flag {
        ($($arg:ident => $field:ident),*) => {$(if let Some(v) = a.$arg { lr.$field = v; })*};
    }
    flag!(lr => learning_rate, weight_decay => weight_decay, epochs => epochs, batch_size => batch_size,
        optimizer => optimizer);
    if let Some(seed) = ctx.seed {
        lr.seed = seed;
    }
    let cfg = BaselineRun {
        lr: &lr,
        train_fraction: split_cfg.train_fraction,
        val_fraction: split_cfg.val_fraction,
    };
    let mut run = Run::start(
        "baseline",
        &ctx.argv,
        &cfg,
        &[&a.data],
        &ctx.out_dir,
        ctx.threads,
    )?;

    let split = split_dataset(
        &ds,
        split_cfg.train_fraction,
        split_cfg.val_fraction,
        lr.seed,
    )?;
    let train: Vec<_> = ds.subset(&split.train);
    let prep = Preprocessor::fit(&train, ds.features())?;
    let inputs: Vec<_> = ds.samples.iter().map(|s| prep.transform(s)).collect();
    let rows = |idx: &[usize]| {
        idx.iter()
            .map(|&i| aggregate(&inputs[i]))
            .collect::<Vec<_>>()
    };
    let labels = |idx: &[usize]| idx.iter().map(|&i| ds.samples[i].label).collect::<Vec<_>>();

    eprintln!(
        "fitting aggregated logistic regression on {} samples",
        split.train.len()
    );
    let model = train_lr(&rows(&split.train), &labels(&split.train), &lr)?;
    let scores: Vec<f64> = rows(&split.test).iter().map(|r| model.predict(r)).collect();
    let test = MetricsReport::classification(&scores, &labels(&split.test))?;

    eprintln!("fitting {} per-window models", ds.windows);
    let train_inputs: Vec<_> = split.train.iter().map(|&i| &inputs[i]).collect();
    let pw = per_window_lr(&train_inputs, &labels(&split.train), &lr)?;

    let coef_path = run.artifact("coefficients.csv");
    write_coefficients_csv(&pw.normalized, &ds.feature_names, &coef_path)?;
    let report_path = run.artifact("baseline.json");
    let report = BaselineReport {
        aggregated: &model,
        test: &test,
        per_window: &pw,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&report_path, text).map_err(io_err(&report_path))?;
    let id = run.id.clone();
    let manifest = run.finish()?;
    print_metrics("test", &test);
    emit("run_id", id);
    emit_path("coefficients", &coef_path);
    emit_path("report", &report_path);
    emit_path("manifest", &manifest);
    Ok(())
}
