use std::fs;

use cvvnet_autograd::Tensor;
use cvvnet_core::manifest::{GridSpec, Manifest};
use cvvnet_core::{Condition, ViewGroup};
use cvvnet_model::BackboneConfig;
use cvvnet_train::metrics::METRICS_HEADER;
use cvvnet_train::trainer::METRICS_FILE;
use cvvnet_train::{
    list_checkpoints, read_metrics, SequenceData, StepRecord, TrainConfig, TrainError, TrainSet, Trainer,
};

fn tiny_data(identities: usize, repeats: usize) -> TrainSet {
    let grid = GridSpec {
        identities,
        first_identity_seed: 1,
        view_angles: vec![(ViewGroup::Low, vec![0.0, 10.0])],
        conditions: vec![Condition::NM],
        repeats,
        n_frames: 10,
        seed: 3,
    };
    let m = Manifest::grid(&grid).unwrap();
    let seqs = m
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| SequenceData::from_clip(&e.render().unwrap(), format!("s{i}"), i % repeats))
        .collect();
    TrainSet::new(seqs)
}

fn tiny_config(seed: u64, total_steps: usize) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.backbone = BackboneConfig { stage_channels: vec![4, 8], n_heads: 2, embed_dim: 8, num_classes: 4, ..BackboneConfig::toy() };
    c.p = 2;
    c.k = 2;
    c.clip_length = 4;
    c.model_seed = seed;
    c.data_seed = seed + 100;
    c.schedule = c.schedule.with_total_steps(total_steps);
    c.checkpoint_every = 2;
    c
}

fn bits(records: &[StepRecord]) -> Vec<[u64; 4]> {
    records.iter().map(|r| [r.lr.to_bits(), r.triplet.to_bits(), r.ce.to_bits(), r.total.to_bits()]).collect()
}

#[test]
fn zero_steps_write_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(0, 5), tiny_data(4, 2), dir.path()).unwrap();
    let records = t.run(0).unwrap();
    assert!(records.is_empty());
    let ckpts = list_checkpoints(dir.path()).unwrap();
    assert_eq!(ckpts.len(), 1);
    assert_eq!(ckpts[0].0, 0);
    assert_eq!(fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap(), format!("{METRICS_HEADER}\n"));
}

#[test]
fn resume_reproduces_the_uninterrupted_trajectory() {
    let full_dir = tempfile::tempdir().unwrap();
    let mut full = Trainer::new(tiny_config(1, 6), tiny_data(4, 2), full_dir.path()).unwrap();
    let reference = full.run(6).unwrap();
    assert_eq!(reference.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(tiny_config(1, 6), tiny_data(4, 2), dir.path()).unwrap();
    first.run(3).unwrap();
    let steps: Vec<usize> = list_checkpoints(dir.path()).unwrap().into_iter().map(|(s, _)| s).collect();
    assert_eq!(steps, vec![0, 2, 3]);
    drop(first);
    let ckpt = cvvnet_train::checkpoint_dir(dir.path(), 2);
    let mut resumed = Trainer::resume(&ckpt, tiny_data(4, 2), dir.path()).unwrap();
    assert_eq!(resumed.step, 2);
    let tail = resumed.run(6).unwrap();
    assert_eq!(bits(&tail), bits(&reference[2..]));
    assert_eq!(
        fs::read(dir.path().join(METRICS_FILE)).unwrap(),
        fs::read(full_dir.path().join(METRICS_FILE)).unwrap()
    );
    let a = fs::read(cvvnet_train::checkpoint_dir(dir.path(), 6).join("model.tensors")).unwrap();
    let b = fs::read(cvvnet_train::checkpoint_dir(full_dir.path(), 6).join("model.tensors")).unwrap();
    assert!(a == b, "final parameters differ after resume");
}

#[test]
fn metric_log_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(2, 3), tiny_data(4, 2), dir.path()).unwrap();
    let records = t.run(3).unwrap();
    let back = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(bits(&records), bits(&back));
    assert_eq!(back.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 1, 2]);
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split('\t').count() == 5));
}

#[test]
fn fixed_batch_loss_decreases_for_most_seeds() {
    let mut decreased = 0;
    for seed in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(tiny_config(seed, 50), tiny_data(4, 2), dir.path()).unwrap();
        let batch = t.batch_input(0);
        let before = t.evaluate_loss(&batch).unwrap().total;
        for step in 0..50 {
            let lr = cvvnet_train::lr_at_step(&t.config.schedule, step).unwrap();
            t.step_on(&batch, lr).unwrap();
        }
        let after = t.evaluate_loss(&batch).unwrap().total;
        if after < before {
            decreased += 1;
        }
    }
    assert!(decreased >= 9, "loss decreased for only {decreased} of 10 seeds");
}

#[test]
fn non_finite_loss_persists_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config(3, 4), tiny_data(4, 2), dir.path()).unwrap();
    let w = t.model.store.id("part_fc.weight").unwrap();
    t.model.store.get_mut(w).data_mut()[0] = f64::NAN;
    match t.train_step() {
        Err(TrainError::NonFiniteLoss { step: 0, batch_dir }) => {
            assert!(batch_dir.join("batch.tensors").exists());
            let items = fs::read_to_string(batch_dir.join("items.tsv")).unwrap();
            assert_eq!(items.lines().count(), 4);
        }
        other => panic!("expected NonFiniteLoss, got {:?}", other.map(|r| r.total)),
    }
}

#[test]
fn configuration_round_trips_and_hashes() {
    let c = tiny_config(5, 40);
    let back = TrainConfig::parse(&c.render()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_eq!(c.hash().len(), 64);
    assert_ne!(tiny_config(6, 40).hash(), c.hash());
    assert!(matches!(TrainConfig::parse("lerning_rate=3\n"), Err(TrainError::InvalidConfig(_))));
    assert!(TrainConfig::parse("p=1\n").is_err());
}

#[test]
fn too_many_identities_for_the_classifier_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny_config(0, 2);
    assert!(matches!(Trainer::new(c, tiny_data(5, 1), dir.path()), Err(TrainError::InvalidConfig(_))));
}

#[test]
fn batch_inputs_are_a_function_of_the_step() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = Trainer::new(tiny_config(4, 10), tiny_data(4, 2), d1.path()).unwrap();
    let b = Trainer::new(tiny_config(4, 10), tiny_data(4, 2), d2.path()).unwrap();
    for step in [0, 3, 7] {
        let (x, y) = (a.batch_input(step), b.batch_input(step));
        assert_eq!(x.clips.data(), y.clips.data());
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.clips.shape(), &[4, 1, 4, 64, 44]);
    }
    let t: &Tensor = &a.batch_input(0).clips;
    assert!(t.data().iter().all(|&v| v == 0.0 || v == 1.0));
}
