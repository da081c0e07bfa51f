use std::fs;

use titv_core::data::{
    ingest, load_dataset, read_events, read_labels, save_dataset, synth_generate, Schedule,
    SynthSpec, WindowSpec,
};
use titv_core::interpret::{
    read_records_csv, reconstruct_prediction, write_records_csv, Explainer,
};
use titv_core::model::{ModelConfig, Task, Variant};
use titv_core::train::{evaluate, train, Checkpoint, SplitName, TrainConfig};

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn synthetic_data_trains_saves_and_explains() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SynthSpec::with_schedules(
        200,
        5,
        &[Schedule::Ramp, Schedule::Constant, Schedule::Constant],
        3,
    );
    spec.scale = 4.0;
    let ds = synth_generate(&spec).unwrap();
    let path = dir.path().join("d.titv");
    save_dataset(&ds, &path).unwrap();
    let ds = load_dataset(&path).unwrap();

    let model = ModelConfig::new(ds.features(), ds.windows).with_dims(4, 4);
    let cfg = quick_config(5);
    let mut seen = 0;
    let outcome = train(&ds, &model, &cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, outcome.history.len());
    assert!(outcome.history.len() <= 3);

    let ckpt = Checkpoint::new(&outcome, &model, &cfg, &ds);
    let cpath = dir.path().join("c.json");
    ckpt.save(&cpath).unwrap();
    let back = Checkpoint::load(&cpath).unwrap();
    assert_eq!(back, ckpt);
    let params = back.parameters().unwrap();
    let split = back.split(&ds).unwrap();
    assert_eq!(split, outcome.split);

    let test = split.select(SplitName::Test);
    let (preds, report) =
        evaluate(&params, &back.model, &ds, &back.preprocessor, &test, 1).unwrap();
    assert_eq!(preds.len(), test.len());
    assert!(preds.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(report.sample_count, test.len());

    let explainer = Explainer {
        params: &params,
        config: &back.model,
        preprocessor: &back.preprocessor,
    };
    let id = ds.samples[test[0]].id.clone();
    let patient = explainer.patient_report(&ds, &id, &[]).unwrap();
    assert_eq!(patient.records.len(), ds.windows * ds.features());
    assert!((patient.y_hat - preds[0]).abs() < 1e-12);

    let x = back.preprocessor.transform(&ds.samples[test[0]]);
    let fi = titv_core::Tensor64::matrix(
        ds.windows,
        ds.features(),
        (0..ds.windows)
            .flat_map(|t| (0..ds.features()).map(move |d| (t, d)))
            .map(|(t, d)| patient.records[d * ds.windows + t].fi_value)
            .collect(),
    )
    .unwrap();
    let r = reconstruct_prediction(&fi, &x, params.b_out.item(), Task::Classification).unwrap();
    assert!((r - patient.y_hat).abs() < 1e-9);

    let rpath = dir.path().join("r.csv");
    write_records_csv(&patient.records, &rpath).unwrap();
    assert_eq!(read_records_csv(&rpath).unwrap(), patient.records);

    let report = explainer.feature_report(&ds, &test, "f1", true).unwrap();
    assert_eq!(report.windows.len(), ds.windows);
    assert_eq!(report.points.unwrap().len(), ds.windows * test.len());
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let spec = SynthSpec::with_schedules(120, 4, &[Schedule::Ramp, Schedule::Constant], 9);
    let ds = synth_generate(&spec).unwrap();
    let model = ModelConfig::new(2, 4)
        .with_dims(3, 3)
        .with_variant(Variant::Full);
    let run = |threads| {
        let cfg = TrainConfig {
            threads,
            ..quick_config(1)
        };
        let o = train(&ds, &model, &cfg, |_| {}).unwrap();
        Checkpoint::new(&o, &model, &cfg, &ds).to_json().unwrap()
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn event_files_become_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    let labels = dir.path().join("labels.csv");
    fs::write(
        &events,
        "entity_id,timestamp,feature,value\n\
         a,0,hr,80\na,5,hr,90\na,12,bp,120\nb,3,bp,110\nb,15,hr,70\nzz,1,hr,1\n",
    )
    .unwrap();
    fs::write(&labels, "entity_id,window_start,label\na,0,1\nb,0,0\n").unwrap();
    let ev = read_events(&events).unwrap();
    let lb = read_labels(&labels).unwrap();
    let ds = ingest(
        &ev,
        &lb,
        WindowSpec::new(20, 10).unwrap(),
        None,
        Task::Classification,
    )
    .unwrap();
    assert_eq!(ds.feature_names, ["bp", "hr"]);
    assert_eq!(ds.windows, 2);
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.samples[0].id, "a");
    assert_eq!(ds.samples[0].values.get(0, 1), 85.0);
    assert_eq!(ds.samples[0].values.get(1, 0), 120.0);
    assert!(!ds.samples[0].mask[2 + 1]);
    assert_eq!(ds.samples[1].label, 0.0);
}

#[test]
fn bad_event_header_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    fs::write(&events, "id,time,name,v\n").unwrap();
    let e = read_events(&events).unwrap_err().to_string();
    assert!(e.contains("events.csv"), "{e}");
}
