use snn_core::datasets::pavlov::{gen_pavlov, PavlovConfig};
use snn_core::topology::{build_random, RandomTopologySpec};
use snn_core::training::metrics::{append_row, parse_metrics, METRICS_HEADER};
use snn_core::training::{train, Checkpoint, EvalPlan, EvalTask, TrainConfig, TrainError, Trainer};

fn setup() -> (snn_core::topology::NetworkTopology, snn_core::datasets::Dataset) {
    let t = build_random(&RandomTopologySpec { n_hidden: 6, ..Default::default() }).unwrap();
    let d = gen_pavlov(&PavlovConfig { episodes: 40, ..Default::default() }).unwrap();
    (t, d)
}

#[test]
fn checkpoint_file_restores_parameters() {
    let (t, d) = setup();
    let cfg = TrainConfig { epochs: 2, batch_size: 8, ..Default::default() };
    let mut tr = Trainer::new(&t, &d, cfg, EvalPlan::default()).unwrap();
    tr.run_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    tr.checkpoint().save(&path).unwrap();
    let ck = Checkpoint::load(&path, false).unwrap();
    let restored = ck.param_set(&ck.topology().unwrap()).unwrap();
    assert_eq!(restored.values(), tr.params().values());
    assert_eq!(ck.epoch, 1);
}

#[test]
fn tampered_checkpoint_needs_force() {
    let (t, d) = setup();
    let tr = Trainer::new(&t, &d, TrainConfig::default(), EvalPlan::default()).unwrap();
    let mut ck = tr.checkpoint();
    ck.config.lr *= 2.0;
    let text = ck.to_json();
    assert!(matches!(Checkpoint::from_json(&text, false), Err(TrainError::HashMismatch { .. })));
    assert!(Checkpoint::from_json(&text, true).is_ok());
}

#[test]
fn resume_refuses_a_different_topology() {
    let (t, d) = setup();
    let tr = Trainer::new(&t, &d, TrainConfig::default(), EvalPlan::default()).unwrap();
    let ck = tr.checkpoint();
    let other = build_random(&RandomTopologySpec { n_hidden: 6, seed: 99, ..Default::default() }).unwrap();
    assert!(ck.ensure_compatible(&other, &TrainConfig::default(), false).is_err());
    assert!(ck.ensure_compatible(&other, &TrainConfig::default(), true).is_ok());
}

#[test]
fn epochs_and_workers_do_not_change_identity() {
    let a = TrainConfig::default();
    let b = TrainConfig { epochs: 3, workers: 2, ..Default::default() };
    let c = TrainConfig { lr: 0.5, ..Default::default() };
    assert_eq!(a.identity_hash(), b.identity_hash());
    assert_ne!(a.identity_hash(), c.identity_hash());
}

#[test]
fn metrics_file_parses_back() {
    let (t, d) = setup();
    let held = gen_pavlov(&PavlovConfig { episodes: 10, seed: 4, ..Default::default() }).unwrap();
    let cfg = TrainConfig { epochs: 3, batch_size: 8, ..Default::default() };
    let out = train(&t, &d, cfg, EvalPlan { dataset: Some(held), task: EvalTask::Pavlov }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for row in &out.history {
        append_row(dir.path(), row).unwrap();
    }
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(text.starts_with(METRICS_HEADER));
    let rows = parse_metrics(&text).unwrap();
    assert_eq!(rows.len(), 3);
    for (a, b) in rows.iter().zip(&out.history) {
        assert_eq!(a.epoch, b.epoch);
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert!(a.task_metric.is_some());
    }
    assert!(dir.path().join("timing.csv").exists());
}
