use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SPEC: &str = r#"
samples = 80
windows = 3
scale = 4.0
seed = 2
features = [
  { name = "rising", weight = 1.0, schedule = "ramp" },
  { name = "flat", weight = -1.0, schedule = "constant" },
]
"#;

fn titv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_titv"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn key(o: &Output, k: &str) -> String {
    let prefix = format!("{k}=");
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
        .unwrap_or_else(|| panic!("no `{k}` in:\n{}", stdout(o)))
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status,
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn synth(dir: &Path) -> PathBuf {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let o = ok(titv(
        dir,
        &["synth", "--spec", "spec.toml", "--out", "d.titv"],
    ));
    assert_eq!(key(&o, "samples"), "80");
    dir.join("d.titv")
}

fn train(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        "d.titv",
        "--rnn-dim",
        "3",
        "--film-dim",
        "3",
    ];
    args.extend_from_slice(extra);
    ok(titv(dir, &args))
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic_and_seed_overrides_spec() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path());
    let first = fs::read(&d).unwrap();
    ok(titv(
        dir.path(),
        &["synth", "--spec", "spec.toml", "--out", "e.titv"],
    ));
    assert_eq!(fs::read(dir.path().join("e.titv")).unwrap(), first);
    ok(titv(
        dir.path(),
        &[
            "--seed",
            "3",
            "synth",
            "--spec",
            "spec.toml",
            "--out",
            "f.titv",
        ],
    ));
    assert_ne!(fs::read(dir.path().join("f.titv")).unwrap(), first);
    let truth = json(dir.path().join("d.truth.json"));
    assert_eq!(truth["weights"], serde_json::json!([1.0, -1.0]));
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.toml"), SPEC.replace("\"ramp\"", "\"zigzag\"")).unwrap();
    let o = titv(p, &["synth", "--spec", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("zigzag"));
    assert_eq!(
        titv(p, &["train", "--data", "missing.titv"]).status.code(),
        Some(2)
    );
    assert_eq!(titv(p, &["bogus"]).status.code(), Some(2));

    synth(p);
    let o = titv(p, &["train", "--data", "d.titv", "--lr", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = titv(p, &["train", "--data", "d.titv", "--variant", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(p.join("cfg.toml"), "[train]\nlearning_rat = 0.1\n").unwrap();
    let o = titv(p, &["--config", "cfg.toml", "train", "--data", "d.titv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));
}

#[test]
fn defaults_are_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = train(dir.path(), &[]);
    let m = json(dir.path().join(key(&o, "manifest")));
    let t = &m["config"]["train"];
    assert_eq!(t["learning_rate"], 0.001);
    assert_eq!(t["weight_decay"], 5e-5);
    assert_eq!(t["max_epochs"], 200);
    assert_eq!(t["patience"], 10);
    assert_eq!(m["config"]["model"]["variant"], "full");
    assert_eq!(m["run_id"].as_str().unwrap(), key(&o, "run_id"));
    assert!(m["artifacts"].as_array().unwrap().len() >= 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    fs::write(
        p.join("cfg.toml"),
        "[train]\nlearning_rate = 0.05\nmax_epochs = 2\n[model]\nvariant = \"variant-only\"\n",
    )
    .unwrap();
    let o = train(p, &["--config", "cfg.toml", "--lr", "0.02"]);
    let ck = json(p.join(key(&o, "checkpoint")));
    assert_eq!(ck["train"]["learning_rate"], 0.02);
    assert_eq!(ck["train"]["max_epochs"], 2);
    assert_eq!(ck["model"]["variant"], "variant_only");
    let o = train(p, &["--config", "cfg.toml", "--variant", "invariant-only"]);
    let ck = json(p.join(key(&o, "checkpoint")));
    assert_eq!(ck["model"]["variant"], "invariant_only");
}

#[test]
fn large_dimensions_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = ok(titv(
        dir.path(),
        &[
            "train",
            "--data",
            "d.titv",
            "--rnn-dim",
            "128",
            "--film-dim",
            "512",
            "--epochs",
            "1",
        ],
    ));
    let ck = json(dir.path().join(key(&o, "checkpoint")));
    assert_eq!(ck["model"]["rnn_dim"], 128);
    assert_eq!(ck["model"]["film_dim"], 512);
}

#[test]
fn evaluate_and_interpret_produce_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    synth(p);
    let o = train(p, &["--epochs", "2", "--seed", "4"]);
    let ck = key(&o, "checkpoint");
    let test_samples: usize = key(&o, "test_samples").parse().unwrap();

    let e = ok(titv(
        p,
        &["evaluate", "--checkpoint", &ck, "--data", "d.titv"],
    ));
    assert_eq!(key(&e, "test_auc"), key(&o, "test_auc"));
    let preds = fs::read_to_string(p.join(key(&e, "predictions"))).unwrap();
    assert_eq!(preds.lines().next(), Some("sample_id,label,prediction"));
    assert_eq!(preds.lines().count(), test_samples + 1);

    let i = ok(titv(
        p,
        &[
            "interpret",
            "--checkpoint",
            &ck,
            "--data",
            "d.titv",
            "--mode",
            "patient",
            "--sample",
            "s07",
        ],
    ));
    let rows = fs::read_to_string(p.join(key(&i, "output"))).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2);
    let i = ok(titv(
        p,
        &[
            "interpret",
            "--checkpoint",
            &ck,
            "--data",
            "d.titv",
            "--mode",
            "patient",
            "--sample",
            "s07",
            "--features",
            "flat",
        ],
    ));
    let rows = fs::read_to_string(p.join(key(&i, "output"))).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3);

    let i = ok(titv(
        p,
        &[
            "interpret",
            "--checkpoint",
            &ck,
            "--data",
            "d.titv",
            "--mode",
            "feature",
            "--feature",
            "rising",
            "--format",
            "json",
        ],
    ));
    let report = json(p.join(key(&i, "output")));
    assert_eq!(report["windows"].as_array().unwrap().len(), 3);

    let bad = titv(
        p,
        &[
            "interpret",
            "--checkpoint",
            &ck,
            "--data",
            "d.titv",
            "--mode",
            "patient",
            "--sample",
            "s99",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn baseline_reports_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = ok(titv(
        dir.path(),
        &["baseline", "--data", "d.titv", "--epochs", "5"],
    ));
    let auc: f64 = key(&o, "test_auc").parse().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    let coef = fs::read_to_string(dir.path().join(key(&o, "coefficients"))).unwrap();
    assert!(coef.lines().count() > 1);
}

#[test]
fn verify_small_budget_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(titv(
        dir.path(),
        &["verify", "--scope", "identity", "--trials", "20"],
    ));
    assert_eq!(key(&o, "identity_pass"), "true");
}

#[test]
fn shipped_specs_and_config_load() {
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let dir = tempfile::tempdir().unwrap();
    let spec = specs.join("small.toml");
    let config = specs.join("run.toml");
    let o = ok(titv(
        dir.path(),
        &["synth", "--spec", spec.to_str().unwrap(), "--out", "d.titv"],
    ));
    assert_eq!(key(&o, "features"), "3");
    let o = train(
        dir.path(),
        &["--config", config.to_str().unwrap(), "--epochs", "1"],
    );
    assert!(key(&o, "checkpoint").starts_with("runs"));
    let text = fs::read_to_string(specs.join("mixed.toml")).unwrap();
    let mixed = titv_core::data::SynthSpec::from_toml(&text).unwrap();
    assert_eq!(
        (mixed.samples, mixed.windows, mixed.features.len()),
        (5000, 8, 16)
    );
}
