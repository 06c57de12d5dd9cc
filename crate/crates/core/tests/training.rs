use mscanet::data::{generate_dataset, DatasetSpec, Sample};
use mscanet::model::load_model;
use mscanet::train::{evaluate, load_checkpoint, log_csv, save_checkpoint, TrainConfig, Trainer};

fn setup() -> (TrainConfig, Vec<Sample>) {
    let data = generate_dataset(&DatasetSpec {
        scenes: 4,
        width: 32,
        height: 32,
        heads_min: 2,
        heads_max: 6,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = TrainConfig::desk();
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.augment.crop_size = 32;
    cfg.model = cfg.model.with_width(1.0 / 16.0);
    (cfg, data)
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (cfg, data) = setup();
    let mut straight = Trainer::<f32>::new(cfg.clone()).unwrap();
    let full_log = straight.fit(&data, None, |_, _| Ok(())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.msca");
    let mut first = Trainer::<f32>::new(cfg.clone()).unwrap();
    let head = first.run_epoch(&data, None).unwrap();
    save_checkpoint(&first.checkpoint(), &path).unwrap();
    let mut resumed = Trainer::resume(cfg, load_checkpoint::<f32>(&path).unwrap()).unwrap();
    assert_eq!(resumed.epoch, 1);
    let tail = resumed.fit(&data, None, |_, _| Ok(())).unwrap();
    let mut joined = vec![head];
    joined.extend(tail);
    assert_eq!(log_csv(&joined), log_csv(&full_log));
    assert_eq!(resumed.model.params().tensors(), straight.model.params().tensors());
}

#[test]
fn checkpoint_reload_reproduces_metrics_exactly() {
    let (cfg, data) = setup();
    let mut t = Trainer::<f32>::new(cfg).unwrap();
    t.fit(&data, None, |_, _| Ok(())).unwrap();
    let before = evaluate(&t.model, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.msca");
    save_checkpoint(&t.checkpoint(), &path).unwrap();
    let after = evaluate(&load_model::<f32>(&path).unwrap(), &data).unwrap();
    assert_eq!(before, after);
    assert_eq!(before.to_text(), after.to_text());
}

#[test]
fn double_precision_runs_are_identical() {
    let (cfg, data) = setup();
    let run = || {
        let mut t = Trainer::<f64>::new(cfg.clone()).unwrap();
        log_csv(&t.fit(&data, Some(&data), |_, _| Ok(())).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn resume_rejects_a_different_architecture() {
    let (cfg, data) = setup();
    let mut t = Trainer::<f32>::new(cfg.clone()).unwrap();
    t.run_epoch(&data, None).unwrap();
    let mut other = cfg;
    other.model = other.model.with_width(1.0 / 8.0);
    assert!(matches!(Trainer::resume(other, t.checkpoint()), Err(mscanet::Error::Version(_))));
}
