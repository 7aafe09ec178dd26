use polyrnn::cells::CellKind;
use polyrnn::data::{synthetic_longrange, Split, SyntheticTask};
use polyrnn::training::{
    batch_loss_and_grad, evaluate, initialize, select_best, train, EpochRecord, InitSpec, ModelShape, RmsProp,
    TrainConfig,
};

fn shape(cell: CellKind, rate_r: f64, hidden: usize, task: SyntheticTask, seq_len: usize) -> ModelShape {
    ModelShape {
        cell,
        rate_r,
        hidden,
        input_dim: task.input_dim(),
        seq_len,
        classes: task.class_count(),
    }
}

#[test]
fn overfits_a_tiny_batch() {
    let data = synthetic_longrange(SyntheticTask::Adding, 12, 10, 5, Split::Train).unwrap();
    let batch: Vec<_> = data.samples.iter().collect();
    for cell in CellKind::ALL {
        for r in [0.0, 2.0] {
            let spec = InitSpec {
                alpha_multiplier: 6.0,
                weight_std_coeff: 1.0,
                seed: 3,
                ..InitSpec::default()
            };
            let mut model = initialize(&shape(cell, r, 32, SyntheticTask::Adding, 12), &spec).unwrap();
            let mut opt = RmsProp::new(&model);
            let mut loss = f64::INFINITY;
            for _ in 0..500 {
                let res = batch_loss_and_grad(&model, &batch).unwrap();
                loss = res.mean_loss;
                if loss < 0.01 {
                    break;
                }
                opt.step(&mut model, &res.grads, 3e-3).unwrap();
            }
            assert!(loss < 0.01, "{cell} r={r}: loss {loss}");
        }
    }
}

#[test]
fn copy_task_is_learnable() {
    let train_set = synthetic_longrange(SyntheticTask::Copy, 10, 256, 1, Split::Train).unwrap();
    let valid_set = synthetic_longrange(SyntheticTask::Copy, 10, 128, 2, Split::Valid).unwrap();
    let spec = InitSpec {
        alpha_multiplier: 1.0,
        weight_std_coeff: 1.0,
        seed: 4,
        ..InitSpec::default()
    };
    let model = initialize(&shape(CellKind::Leaky, 0.0, 8, SyntheticTask::Copy, 10), &spec).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 32,
        epochs: 50,
        profile_epochs: vec![],
        ..TrainConfig::default()
    };
    let outcome = train(model, &train_set, &valid_set, &config).unwrap();
    assert_eq!(outcome.log.len(), 50);
    let (_, acc) = evaluate(&outcome.best, &valid_set).unwrap();
    assert!(acc > 0.95, "accuracy {acc}");
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let data = synthetic_longrange(SyntheticTask::Adding, 10, 8, 0, Split::Train).unwrap();
    let model = initialize(&shape(CellKind::Gru, 0.0, 4, SyntheticTask::Adding, 10), &InitSpec::default()).unwrap();
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let outcome = train(model.clone(), &data, &data, &config).unwrap();
    assert!(outcome.log.is_empty());
    assert_eq!(outcome.best, model);
}

#[test]
fn training_is_deterministic() {
    let data = synthetic_longrange(SyntheticTask::Adding, 10, 40, 0, Split::Train).unwrap();
    let run = || {
        let model =
            initialize(&shape(CellKind::Gated, 1.0, 6, SyntheticTask::Adding, 10), &InitSpec::default()).unwrap();
        let config = TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train(model, &data, &data, &config).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.last, b.last);
}

#[test]
fn best_epoch_is_the_validation_argmin() {
    let rec = |epoch, val_loss| EpochRecord {
        epoch,
        train_loss: 1.0,
        val_loss,
        val_acc: 0.5,
        lr: 1e-3,
    };
    let log = vec![rec(1, 0.9), rec(2, 0.4), rec(3, 0.6), rec(4, 0.4)];
    assert_eq!(select_best(&log), Some(1));
    assert_eq!(select_best(&[]), None);
}
