//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Every criterion is evaluated
//! and reported; the process exits non-zero on a failed criterion only when
//! `TITV_ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use titv_core::baseline::{aggregate, train_lr, LrConfig};
use titv_core::data::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, synth_generate, Dataset, Schedule,
    SynthSpec,
};
use titv_core::interpret::{read_records_csv, write_records_csv, Explainer};
use titv_core::metrics::{roc_auc, spearman};
use titv_core::model::{ModelConfig, Variant};
use titv_core::train::{evaluate, train, Checkpoint, TrainConfig, TrainOutcome};
use titv_core::verify::{
    film_identity_suite, gradient_suite, identity_suite, planted_ramp_correlations,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const RAMPS: usize = 8;

struct Report {
    results: Vec<(usize, bool)>,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, started: Instant, detail: String) {
        println!(
            "criterion {n:>2}: {}  [{:.1}s]  {detail}",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        self.results.push((n, pass));
    }
}

/// D=16, T=8, n=5000: eight rising ramps, then eight constants of
/// alternating sign.
fn mixed_spec(seed: u64) -> SynthSpec {
    let mut schedules = vec![Schedule::Ramp; RAMPS];
    schedules.extend([Schedule::Constant; 8]);
    let mut spec = SynthSpec::with_schedules(5000, 8, &schedules, seed);
    for (d, f) in spec.features.iter_mut().enumerate() {
        f.weight = if d >= RAMPS && d % 2 == 1 { -1.0 } else { 1.0 };
    }
    spec.scale = 4.0;
    spec
}

fn fit(ds: &Dataset, variant: Variant, seed: u64) -> (TrainOutcome, ModelConfig, f64) {
    let model = ModelConfig::new(ds.features(), ds.windows).with_variant(variant);
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let out = train(ds, &model, &cfg, |_| {}).expect("training runs");
    let (_, m) = evaluate(
        &out.params,
        &model,
        ds,
        &out.preprocessor,
        &out.split.test,
        1,
    )
    .expect("evaluation runs");
    let auc = m.auc.expect("test split has both classes");
    eprintln!(
        "  seed {seed} {variant}: test AUC {auc:.4} (best epoch {})",
        out.best_epoch
    );
    (out, model, auc)
}

fn lr_auc(ds: &Dataset, out: &TrainOutcome, seed: u64) -> f64 {
    let rows: Vec<Vec<f64>> = ds
        .samples
        .iter()
        .map(|s| aggregate(&out.preprocessor.transform(s)))
        .collect();
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| rows[i].clone()).collect(),
            idx.iter().map(|&i| ds.samples[i].label).collect(),
        )
    };
    let (x, y) = pick(&out.split.train);
    let model = train_lr(
        &x,
        &y,
        &LrConfig {
            seed,
            ..LrConfig::default()
        },
    )
    .expect("lr trains");
    let (xt, yt) = pick(&out.split.test);
    let scores: Vec<f64> = xt.iter().map(|r| model.predict(r)).collect();
    roc_auc(&scores, &yt).expect("both classes")
}

/// Spearman correlation of each feature's mean FI series on the test split
/// with its planted effective weight series (ramps) or with window rank
/// (constants).
fn fi_correlations(ds: &Dataset, out: &TrainOutcome, model: &ModelConfig) -> Vec<f64> {
    let ex = Explainer {
        params: &out.params,
        config: model,
        preprocessor: &out.preprocessor,
    };
    let truth = ds.ground_truth.as_ref().expect("synthetic");
    let rank: Vec<f64> = (0..ds.windows).map(|t| t as f64).collect();
    (0..ds.features())
        .map(|d| {
            let series = ex.feature_series(ds, &out.split.test, d).expect("explains");
            let mean: Vec<f64> = (0..ds.windows)
                .map(|t| series.iter().map(|s| s[t]).sum::<f64>() / series.len() as f64)
                .collect();
            if d < RAMPS {
                spearman(&mean, &truth.effective_series(d))
            } else {
                spearman(&mean, &rank)
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_cli(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_titv"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "titv {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` line"))
}

fn determinism(dir: &Path) -> (bool, String) {
    let spec = dir.join("spec.toml");
    std::fs::write(
        &spec,
        "samples = 600\nwindows = 4\nseed = 3\nfeatures = [\n  { weight = 1.0, schedule = \"ramp\" },\n  { weight = -1.0, schedule = \"constant\" },\n  { weight = 1.0, schedule = \"spike@2\" },\n]\n",
    )
    .unwrap();
    let d = dir.to_str().unwrap();
    let data = run_cli(&["synth", "--spec", spec.to_str().unwrap(), "--out-dir", d]);
    let data = value(&data, "dataset").to_string();
    let mut runs = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out_dir = dir.join(sub);
        let o = run_cli(&[
            "train",
            "--data",
            &data,
            "--epochs",
            "4",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        let ck = std::fs::read(value(&o, "checkpoint")).unwrap();
        let log = std::fs::read(value(&o, "metrics_log")).unwrap();
        runs.push((ck, log));
    }
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    (
        same,
        format!(
            "3 runs (threads 1, 1, 4), checkpoint {} bytes",
            runs[0].0.len()
        ),
    )
}

fn round_trips(dir: &Path) -> (bool, String) {
    let mut spec = mixed_spec(9);
    spec.samples = 300;
    spec.missing_rate = 0.2;
    let ds = synth_generate(&spec).unwrap();
    let path = dir.join("rt.titv");
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    let bits = |d: &Dataset| -> Vec<u64> {
        d.samples
            .iter()
            .flat_map(|s| {
                s.values
                    .data()
                    .iter()
                    .chain([&s.label])
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let dataset_ok = back == ds
        && bits(&back) == bits(&ds)
        && encode_dataset(&back).unwrap() == encode_dataset(&ds).unwrap()
        && decode_dataset(&encode_dataset(&ds).unwrap()).unwrap() == ds;

    let model = ModelConfig::new(ds.features(), ds.windows).with_dims(4, 4);
    let cfg = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let out = train(&ds, &model, &cfg, |_| {}).unwrap();
    let ck = Checkpoint::new(&out, &model, &cfg, &ds);
    let ck_path = dir.join("rt.checkpoint.json");
    ck.save(&ck_path).unwrap();
    let ck_back = Checkpoint::load(&ck_path).unwrap();
    let pbits = |c: &Checkpoint| -> Vec<u64> {
        c.params
            .iter()
            .flat_map(|t| t.values.iter().map(|v| v.to_bits()))
            .collect()
    };
    let checkpoint_ok = ck_back == ck
        && pbits(&ck_back) == pbits(&ck)
        && ck_back.parameters().unwrap() == out.params;

    let ex = Explainer {
        params: &out.params,
        config: &model,
        preprocessor: &out.preprocessor,
    };
    let mut records = Vec::new();
    for s in ds.samples.iter().take(20) {
        records.extend(ex.patient_report(&ds, &s.id, &[]).unwrap().records);
    }
    let csv_path = dir.join("rt.csv");
    write_records_csv(&records, &csv_path).unwrap();
    let read = read_records_csv(&csv_path).unwrap();
    let csv_ok = read.len() == records.len()
        && read.iter().zip(&records).all(|(a, b)| {
            a.fi_value.to_bits() == b.fi_value.to_bits()
                && a.input_value.to_bits() == b.input_value.to_bits()
                && a == b
        });
    (
        dataset_ok && checkpoint_ok && csv_ok,
        format!("dataset {dataset_ok}, checkpoint {checkpoint_ok}, interpretation csv {csv_ok} ({} records)", records.len()),
    )
}

fn main() {
    let mut report = Report {
        results: Vec::new(),
    };
    let total = Instant::now();

    let t = Instant::now();
    let r = identity_suite(1000).unwrap();
    let fast = t.elapsed().as_secs_f64() < 60.0;
    report.line(
        1,
        r.passed() && fast,
        t,
        format!(
            "{} trials, worst |recon - yhat| {:.2e} < 1e-9",
            r.trials, r.worst
        ),
    );

    let t = Instant::now();
    let r = gradient_suite(50, 1e-5).unwrap();
    let fast = t.elapsed().as_secs_f64() < 120.0;
    report.line(
        2,
        r.passed() && fast,
        t,
        format!(
            "{} seeds, worst relative error {:.2e} < 1e-4",
            r.trials, r.worst
        ),
    );

    let t = Instant::now();
    let r = film_identity_suite(100).unwrap();
    report.line(
        3,
        r.passed(),
        t,
        format!(
            "{} instances, {} not bit-identical",
            r.trials,
            r.failures.len()
        ),
    );

    let t = Instant::now();
    let mut full_auc = Vec::new();
    let mut lr = Vec::new();
    let mut rho = Vec::new();
    let mut datasets = Vec::new();
    for seed in SEEDS {
        let ds = synth_generate(&mixed_spec(seed)).unwrap();
        let (out, model, auc) = fit(&ds, Variant::Full, seed);
        full_auc.push(auc);
        lr.push(lr_auc(&ds, &out, seed));
        rho.push(fi_correlations(&ds, &out, &model));
        datasets.push(ds);
    }
    let mean_full = mean(&full_auc);
    report.line(
        4,
        mean_full >= 0.90,
        t,
        format!(
            "mean test AUC {mean_full:.4} >= 0.90 over {} seeds",
            SEEDS.len()
        ),
    );

    let t = Instant::now();
    let per_ramp: Vec<f64> = (0..RAMPS)
        .map(|d| mean(&rho.iter().map(|r| r[d]).collect::<Vec<_>>()))
        .collect();
    let constants: Vec<f64> = rho.iter().flat_map(|r| r[RAMPS..].to_vec()).collect();
    let worst_ramp = per_ramp.iter().copied().fold(f64::INFINITY, f64::min);
    let constant_mean = mean(&constants);
    report.line(
        5,
        worst_ramp >= 0.6 && constant_mean.abs() < 0.3,
        t,
        format!(
            "min over ramp features of seed-mean rho {worst_ramp:.3} >= 0.6 (all: {}); constant mean rho {constant_mean:+.3}, |.| < 0.3",
            per_ramp.iter().map(|v| format!("{v:+.2}")).collect::<Vec<_>>().join(" ")
        ),
    );

    let t = Instant::now();
    let mean_lr = mean(&lr);
    report.line(
        6,
        mean_full - mean_lr >= 0.03,
        t,
        format!(
            "TITV {mean_full:.4} vs aggregated LR {mean_lr:.4}, margin {:.4} >= 0.03",
            mean_full - mean_lr
        ),
    );

    let t = Instant::now();
    let mut inv = Vec::new();
    let mut var = Vec::new();
    for (ds, &seed) in datasets.iter().zip(&SEEDS) {
        inv.push(fit(ds, Variant::InvariantOnly, seed).2);
        var.push(fit(ds, Variant::VariantOnly, seed).2);
    }
    let (mi, mv) = (mean(&inv), mean(&var));
    report.line(
        7,
        mean_full >= mi && mean_full >= mv && mi >= 0.6 && mv >= 0.6,
        t,
        format!(
            "mean AUC full {mean_full:.5}, invariant-only {mi:.5} ({:+.1e}), variant-only {mv:.5} ({:+.1e}); ablations >= 0.6",
            mean_full - mi,
            mean_full - mv
        ),
    );

    let t = Instant::now();
    let fig: Vec<(f64, f64)> = SEEDS
        .iter()
        .map(|&s| planted_ramp_correlations(s).unwrap())
        .collect();
    let rising = fig.iter().filter(|(r, _)| *r > 0.0).count();
    let flat = fig.iter().filter(|(_, c)| c.abs() < 0.5).count();
    report.line(
        8,
        rising == SEEDS.len() && flat >= 4,
        t,
        format!(
            "ramp rho > 0 in {rising}/5, constant |rho| < 0.5 in {flat}/5 (ramp {}; constant {})",
            fig.iter()
                .map(|(r, _)| format!("{r:+.2}"))
                .collect::<Vec<_>>()
                .join(" "),
            fig.iter()
                .map(|(_, c)| format!("{c:+.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    );

    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let (ok, detail) = determinism(dir.path());
    report.line(9, ok, t, detail);

    let t = Instant::now();
    let (ok, detail) = round_trips(dir.path());
    report.line(10, ok, t, detail);

    let passed = report.results.iter().filter(|(_, p)| *p).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0}s",
        report.results.len(),
        total.elapsed().as_secs_f64()
    );
    let strict = std::env::var("TITV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed != report.results.len() {
        std::process::exit(1);
    }
}
