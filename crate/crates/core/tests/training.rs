use oversquash::layers::LayerType;
use oversquash::neighborsmatch::{generate_dataset, Dataset, TreeMatchExample};
use oversquash::oracles::penultimate_sensitivity;
use oversquash::train::{
    accuracy, train, Batch, Model, ModelConfig, Patience, ScheduleStep, StopReason, TrainSchedule,
};
use proptest::prelude::*;

fn single(seed: u64) -> Dataset {
    generate_dataset(2, 1, seed).unwrap()
}

#[test]
fn memorizes_a_single_example() {
    for kind in LayerType::ALL {
        let mut model = Model::<f32>::new(ModelConfig::new(kind, 2)).unwrap();
        let report = train(&mut model, &single(3), &TrainSchedule::default(), |_| {}).unwrap();
        assert_eq!(report.stop_reason, StopReason::Converged100, "{kind}");
        assert!(report.epochs_run < 300, "{kind}: {}", report.epochs_run);
        assert_eq!(accuracy(&model, &single(3)).unwrap(), 1.0);
    }
}

#[test]
fn single_example_loss_decreases_after_epoch_50() {
    let schedule = TrainSchedule {
        max_epochs: 200,
        converge_epochs: usize::MAX,
        ..TrainSchedule::default()
    };
    let monotone = (0..10)
        .filter(|&seed| {
            let config = ModelConfig {
                seed,
                ..ModelConfig::new(LayerType::Gcn, 2)
            };
            let mut model = Model::<f32>::new(config).unwrap();
            let report = train(&mut model, &single(seed), &schedule, |_| {}).unwrap();
            report.epochs[49..].windows(2).all(|w| w[1].loss <= w[0].loss)
        })
        .count();
    assert!(monotone >= 9, "{monotone}/10");
}

#[test]
fn radius_two_reaches_full_accuracy() {
    let ds = generate_dataset(2, 96, 1).unwrap();
    for kind in LayerType::ALL {
        let mut model = Model::<f32>::new(ModelConfig::new(kind, 2)).unwrap();
        let report = train(&mut model, &ds, &TrainSchedule::default(), |_| {}).unwrap();
        assert_eq!(report.best_accuracy, 1.0, "{kind}");
        assert_eq!(accuracy(&model, &ds).unwrap(), 1.0, "{kind}");
    }
}

#[test]
fn first_epochs_are_deterministic() {
    let ds = generate_dataset(3, 300, 2).unwrap();
    let schedule = TrainSchedule {
        max_epochs: 10,
        batch_size: Some(64),
        ..TrainSchedule::default()
    };
    for kind in LayerType::ALL {
        let run = || {
            let mut model = Model::<f32>::new(ModelConfig::new(kind, 3)).unwrap();
            let r = train(&mut model, &ds, &schedule, |_| {}).unwrap();
            r.epochs.iter().map(|e| (e.loss.to_bits(), e.train_acc.to_bits())).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a.len(), 10);
        assert_eq!(a, run(), "{kind}");
    }
}

#[test]
fn learning_rate_halves_on_plateau_then_stops() {
    // An update far below f32 resolution leaves accuracy flat.
    let schedule = TrainSchedule {
        lr: 1e-12,
        decay_patience: 3,
        stop_patience: 8,
        ..TrainSchedule::default()
    };
    let ds = generate_dataset(2, 96, 4).unwrap();
    let mut model = Model::<f32>::new(ModelConfig::new(LayerType::Gin, 2)).unwrap();
    let report = train(&mut model, &ds, &schedule, |_| {}).unwrap();
    assert_eq!(report.stop_reason, StopReason::StopPatience);
    assert_eq!(report.epochs_run, 9);
    let events: Vec<(usize, f64)> = report.lr_events.iter().map(|e| (e.epoch, e.lr)).collect();
    assert_eq!(events, vec![(4, 5e-13), (7, 2.5e-13)]);
    let lrs: Vec<f64> = report.epochs.iter().map(|e| e.lr).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn max_epochs_caps_training() {
    let ds = generate_dataset(3, 50, 4).unwrap();
    let schedule = TrainSchedule {
        max_epochs: 3,
        ..TrainSchedule::default()
    };
    let mut model = Model::<f32>::new(ModelConfig::new(LayerType::Gcn, 3)).unwrap();
    let report = train(&mut model, &ds, &schedule, |_| {}).unwrap();
    assert_eq!((report.epochs_run, report.stop_reason), (3, StopReason::MaxEpochs));
    let best = report.epochs.iter().map(|e| e.train_acc).fold(0.0, f64::max);
    assert_eq!(report.best_accuracy, best);
}

#[test]
fn constant_class_model_scores_class_frequency() {
    let ds = generate_dataset(3, 500, 6).unwrap();
    let mut model = Model::<f32>::new(ModelConfig::new(LayerType::Gat, 3)).unwrap();
    {
        let mut params = model.tensors_mut();
        let k = params.len();
        params[k - 2].data_mut().fill(0.0);
        params[k - 1].data_mut().fill(0.0);
        // Ties go to class 0 as well; make it strict anyway.
        params[k - 1].data_mut()[0] = 1.0;
    }
    let zeros = ds.examples.iter().filter(|e| e.answer() == 0).count();
    assert_eq!(accuracy(&model, &ds).unwrap(), zeros as f64 / ds.len() as f64);
    assert_eq!(ds.class_distribution()[0], zeros);
}

#[test]
fn untrained_models_score_near_chance_on_two_classes() {
    let ds = generate_dataset(1, 4, 0).unwrap();
    let mean: f64 = (0..60)
        .map(|seed| {
            let config = ModelConfig {
                seed,
                ..ModelConfig::new(LayerType::Gcn, 1)
            };
            accuracy(&Model::<f32>::new(config).unwrap(), &ds).unwrap()
        })
        .sum::<f64>()
        / 60.0;
    assert!((mean - 0.5).abs() < 0.15, "{mean}");
}

#[test]
fn fully_adjacent_last_layer_edge_counts() {
    let ex = TreeMatchExample::new(2, vec![0, 1, 2, 3], 1, 0).unwrap();
    let mut config = ModelConfig::new(LayerType::Gcn, 2);
    config.fa_last = true;
    let batch = Batch::<f32>::new(&config, &[(0, &ex)]).unwrap();
    assert_eq!(batch.base.num_edges(), 6);
    assert_eq!(batch.last.num_edges(), 42);
    config.fa_fraction = Some(0.5);
    let batch = Batch::<f32>::new(&config, &[(0, &ex)]).unwrap();
    assert_eq!(batch.last.num_edges(), 21);
    config.fa_fraction = None;
    config.fa_self_loops = true;
    let batch = Batch::<f32>::new(&config, &[(0, &ex)]).unwrap();
    assert_eq!(batch.last.num_edges(), 49);
}

#[test]
fn partial_fa_sample_does_not_depend_on_batching() {
    let ds = generate_dataset(2, 10, 7).unwrap();
    let mut config = ModelConfig::new(LayerType::Gcn, 2);
    config.fa_last = true;
    config.fa_fraction = Some(0.25);
    let alone = Batch::<f32>::new(&config, &[(5, &ds.examples[5])]).unwrap();
    let together = Batch::<f32>::new(&config, &[(4, &ds.examples[4]), (5, &ds.examples[5])]).unwrap();
    let n = ds.examples[4].num_nodes();
    let second: Vec<(usize, usize)> = together
        .last
        .src
        .iter()
        .zip(together.last.dst.iter())
        .filter(|(&u, _)| u >= n)
        .map(|(&u, &v)| (u - n, v - n))
        .collect();
    let first: Vec<(usize, usize)> = alone.last.src.iter().copied().zip(alone.last.dst.iter().copied()).collect();
    assert_eq!(first, second);
}

#[test]
fn fully_adjacent_last_layer_sees_every_node() {
    let ex = TreeMatchExample::new(3, vec![5, 1, 7, 0, 2, 6, 3, 4], 2, 0).unwrap();
    for kind in LayerType::ALL {
        let mut config = ModelConfig::new(kind, 3);
        config.seed = 21;
        let local = Model::<f32>::new(config.clone()).unwrap().cast::<f64>();
        config.fa_last = true;
        let global = Model::<f32>::new(config).unwrap().cast::<f64>();

        let seen = penultimate_sensitivity(&global, &ex, 0.1).unwrap();
        assert!(seen.iter().all(|&c| c > 1e-9), "{kind}: {seen:?}");
        // Without FA the last block only hears the target and its two children.
        let seen = penultimate_sensitivity(&local, &ex, 0.1).unwrap();
        let reached: Vec<usize> = (0..seen.len()).filter(|&u| seen[u] > 0.0).collect();
        assert_eq!(reached, vec![0, 1, 2], "{kind}");
    }
}

proptest! {
    #[test]
    fn patience_invariants(accs in proptest::collection::vec(0usize..5, 1..400), decay in 1usize..20, stop in 1usize..40) {
        let schedule = TrainSchedule {
            decay_patience: decay,
            stop_patience: stop,
            ..TrainSchedule::default()
        };
        let mut p = Patience::new(&schedule);
        let mut best = -1.0;
        let mut last_improvement = 0;
        let mut since_decay_or_improvement = 0;
        for (epoch, &a) in accs.iter().enumerate() {
            let acc = a as f64 / 4.0;
            let improved = acc > best;
            if improved {
                best = acc;
                last_improvement = epoch;
                since_decay_or_improvement = 0;
            } else {
                since_decay_or_improvement += 1;
            }
            let step = p.observe(acc);
            prop_assert!(epoch - last_improvement <= stop);
            match step {
                ScheduleStep::Stop(StopReason::StopPatience) => {
                    prop_assert_eq!(epoch - last_improvement, stop);
                    break;
                }
                ScheduleStep::Stop(StopReason::Converged100) => {
                    prop_assert!(epoch + 1 >= schedule.converge_epochs);
                    break;
                }
                ScheduleStep::Decay => {
                    prop_assert_eq!(since_decay_or_improvement, decay);
                    since_decay_or_improvement = 0;
                }
                _ => prop_assert!(since_decay_or_improvement < decay),
            }
        }
    }
}
