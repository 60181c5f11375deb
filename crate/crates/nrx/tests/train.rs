use sitefit_core::grid::GridConfig;
use sitefit_core::labels::TrainingSample;
use sitefit_nrx::train::finetune_batch;
use sitefit_nrx::{
    finetune, pretrain, AdamConfig, AdamState, NrxConfig, NrxError, NrxModel, PretrainGenerator, Tape, TrainConfig,
    Trainer,
};

fn generator(seed: u64) -> PretrainGenerator {
    PretrainGenerator::new(seed, GridConfig::new(8, 4).unwrap()).unwrap()
}

fn cfg(n_batches: u64, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        n_batches,
        batch_size,
        lr,
        seed: 77,
        n_iters: 8,
    }
}

fn small() -> NrxConfig {
    NrxConfig {
        n_rx: 4,
        state: 8,
        max_iters: 8,
    }
}

#[test]
fn generated_samples_are_reproducible_and_well_formed() {
    let g = generator(1);
    let a = g.sample(5).unwrap();
    assert_eq!(a, g.sample(5).unwrap());
    assert_ne!(a.features, g.sample(6).unwrap().features);
    assert_eq!(a.features.len(), 19 * 14 * 48);
    assert_eq!(a.labels.len(), 2400);
    assert!(a.features.iter().all(|v| v.is_finite()));
    assert!(a.block < 2);
}

#[test]
fn identical_seeds_train_identical_models() {
    let run = || {
        let m = NrxModel::<f32>::init(small(), 3).unwrap();
        pretrain(m, &generator(2), &cfg(3, 4, 1e-3), |_, _| {}).unwrap()
    };
    let a = run();
    assert_eq!(a.params, run().params);
    assert_ne!(a.params, NrxModel::<f32>::init(small(), 3).unwrap().params);
}

#[test]
fn short_pretraining_beats_an_uninformative_receiver() {
    let g = generator(4);
    let mut losses = Vec::new();
    let m = NrxModel::<f32>::init(NrxConfig::default(), 5).unwrap();
    pretrain(m, &g, &cfg(120, 8, 2e-3), |_, l| losses.push(l)).unwrap();
    let tail: f64 = losses[100..].iter().sum::<f64>() / 20.0;
    assert!(tail < std::f64::consts::LN_2 - 0.03, "late loss {tail}");
}

fn dataset(n: usize) -> Vec<TrainingSample> {
    let g = generator(6);
    (0..n as u64).map(|i| g.sample(i).unwrap()).collect()
}

#[test]
fn finetuning_zero_batches_returns_the_input() {
    let m = NrxModel::<f32>::init(small(), 7).unwrap();
    let mut seen = Vec::new();
    let (out, trace) = finetune(m.clone(), &dataset(3), &cfg(0, 2, 1e-4), &[0], |b, cp| {
        seen.push((b, cp.clone()));
        Ok(())
    })
    .unwrap();
    assert_eq!(out, m);
    assert_eq!(seen, vec![(0, m)]);
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0].mean_loss, None);
}

#[test]
fn checkpoints_follow_the_schedule() {
    let m = NrxModel::<f32>::init(small(), 8).unwrap();
    let data = dataset(4);
    let mut seen = Vec::new();
    let (last, trace) = finetune(m.clone(), &data, &cfg(5, 2, 1e-4), &[5, 0, 2, 2], |b, cp| {
        seen.push((b, cp.params.clone()));
        Ok(())
    })
    .unwrap();
    assert_eq!(trace.iter().map(|t| t.batches).collect::<Vec<_>>(), vec![0, 2, 5]);
    assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 2, 5]);
    assert_eq!(seen[0].1, m.params);
    assert_eq!(seen[2].1, last.params);
    assert!(trace[1].mean_loss.unwrap() > 0.0);

    // Checkpoint 2 equals a separate two-batch run.
    let (two, _) = finetune(m.clone(), &data, &cfg(2, 2, 1e-4), &[], |_, _| Ok(())).unwrap();
    assert_eq!(two.params, seen[1].1);

    let err = finetune(m, &data, &cfg(5, 2, 1e-4), &[6], |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, NrxError::Config(_)));
}

#[test]
fn finetune_batches_depend_only_on_seed_and_index() {
    assert_eq!(finetune_batch(1, 9, 16, 100), finetune_batch(1, 9, 16, 100));
    assert_ne!(finetune_batch(1, 9, 16, 100), finetune_batch(1, 10, 16, 100));
    assert!(finetune_batch(2, 0, 500, 7).iter().all(|&i| i < 7));
}

#[test]
fn non_finite_inputs_abort_the_step() {
    let m = NrxModel::<f32>::init(small(), 9).unwrap();
    let mut data = dataset(3);
    data[1].slot_id = 4242;
    data[1].features[100] = f32::NAN;
    let mut t = Trainer::new(m.clone(), 1e-3).unwrap();
    let refs: Vec<&TrainingSample> = data.iter().collect();
    match t.step(&refs, 8) {
        Err(NrxError::NonFinite { sample_ids }) => assert_eq!(sample_ids, vec![4242]),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
    assert_eq!(t.model, m);
    assert_eq!(t.adam.step, 0);
}

#[test]
fn train_step_rejects_bad_batches() {
    let mut m = NrxModel::<f32>::init(small(), 10).unwrap();
    let mut adam = AdamState::new(m.params.len(), AdamConfig::with_lr(1e-3));
    let mut tape = Tape::default();
    let pos = GridConfig::new(4, 4).unwrap().data_positions();
    let err = sitefit_nrx::train_step(&mut m, &mut adam, &[], 8, &mut tape, &pos, 48).unwrap_err();
    assert!(matches!(err, NrxError::Shape(_)));
    let mut s = dataset(1);
    s[0].labels.pop();
    let err = sitefit_nrx::train_step(&mut m, &mut adam, &[&s[0]], 8, &mut tape, &pos, 48).unwrap_err();
    assert!(matches!(err, NrxError::Shape(_)));
}
