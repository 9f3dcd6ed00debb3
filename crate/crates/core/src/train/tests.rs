use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Tensor, Var};
use crate::model::{DewpModel, ModelConfig, ParamSet};
use crate::synthetic::random_window;

/// Predicts a learned constant vector regardless of input.
struct BiasModel {
    params: ParamSet,
    horizon: usize,
}

impl BiasModel {
    fn new(horizon: usize, init: f64) -> Self {
        let mut params = ParamSet::new();
        params.push("bias", Tensor::full(&[horizon], init));
        BiasModel { params, horizon }
    }
}

impl Forecaster for BiasModel {
    fn lookback(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape, leaves: &[Var], _sample: &WindowSample) -> Result<Var> {
        Ok(tape.scale(leaves[0], 1.0))
    }
}

fn windows_with_target(n: usize, value: f64, rng: &mut ChaCha8Rng) -> Vec<WindowSample> {
    (0..n)
        .map(|_| {
            let mut w = random_window(1, 2, 3, rng);
            w.target = vec![value; 3];
            w
        })
        .collect()
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        input_dim: 3,
        lookback: 8,
        horizon: 4,
        hidden: 8,
        stacks: 2,
        conv_channels: 8,
        kernel_size: 3,
        heads: 2,
        embed_month: 2,
        embed_weekday: 2,
        embed_hour: 2,
    }
}

#[test]
fn early_stopping_restores_first_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dataset = Dataset {
        train: windows_with_target(10, 1.0, &mut rng),
        validation: windows_with_target(3, 0.0, &mut rng),
    };
    let cfg = TrainConfig {
        batch_size: 4,
        learning_rate: 0.05,
        patience: 1,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let mut model = BiasModel::new(3, 0.0);
    let (_, report) = train(&mut model, &dataset, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 2);
    assert_eq!(report.best_epoch, 1);
    assert_eq!(report.stop_reason, StopReason::Patience);
    report.verify().unwrap();

    let mut one = BiasModel::new(3, 0.0);
    train(&mut one, &dataset, &TrainConfig { max_epochs: 1, ..cfg }).unwrap();
    assert_eq!(model.params(), one.params());
}

#[test]
fn optimizer_steps_cover_every_batch_including_the_last() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dataset = Dataset {
        train: windows_with_target(10, 1.0, &mut rng),
        validation: windows_with_target(2, 1.0, &mut rng),
    };
    let cfg = TrainConfig {
        batch_size: 4,
        learning_rate: 0.01,
        max_epochs: 3,
        patience: 5,
        ..TrainConfig::default()
    };
    let mut model = BiasModel::new(3, 0.0);
    let (state, report) = train(&mut model, &dataset, &cfg).unwrap();
    assert_eq!(state.t, 9);
    assert_eq!(report.stop_reason, StopReason::MaxEpochs);
    assert!(report.epochs.windows(2).all(|w| w[1].val_mse < w[0].val_mse));
}

#[test]
fn non_finite_loss_names_the_parameter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dataset = Dataset {
        train: windows_with_target(4, 1.0, &mut rng),
        validation: windows_with_target(2, 1.0, &mut rng),
    };
    let mut model = BiasModel::new(3, 0.0);
    model.params_mut().get_mut(0).data_mut()[1] = f64::NAN;
    let cfg = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let mut state = OptimizerState::new(model.params());
    let batch: Vec<&WindowSample> = dataset.train.iter().collect();
    match train_step(&mut model, &batch, &mut state, &cfg) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("bias"), "{msg}"),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_and_empty_sets_are_rejected() {
    let mut model = BiasModel::new(3, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dataset = Dataset {
        train: windows_with_target(4, 1.0, &mut rng),
        validation: vec![],
    };
    assert!(matches!(
        train(&mut model, &dataset, &TrainConfig::default()),
        Err(Error::Contract(_))
    ));
    for cfg in [
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { patience: 0, ..TrainConfig::default() },
        TrainConfig { grad_clip: Some(-1.0), ..TrainConfig::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn gradient_clipping_bounds_the_step() {
    let mut grads = vec![vec![3.0], vec![4.0]];
    clip_global_norm(&mut grads, 1.0);
    assert!((grads[0][0] - 0.6).abs() < 1e-15 && (grads[1][0] - 0.8).abs() < 1e-15);
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let windows: Vec<WindowSample> = (0..12).map(|_| random_window(3, 8, 4, &mut rng)).collect();
    let dataset = Dataset {
        train: windows[..9].to_vec(),
        validation: windows[9..].to_vec(),
    };
    let cfg = TrainConfig {
        batch_size: 4,
        learning_rate: 1e-3,
        max_epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = DewpModel::new(toy_config(), 17).unwrap();
        let (state, report) = train(&mut m, &dataset, &cfg).unwrap();
        (m.params().clone(), state, report)
    };
    let (pa, sa, ra) = run();
    let (pb, sb, rb) = run();
    assert_eq!(pa, pb);
    assert_eq!(sa, sb);
    assert!(ra.same_outcome(&rb));
}

#[test]
fn overfits_a_single_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sample = random_window(3, 8, 4, &mut rng);
    let mut model = DewpModel::new(toy_config(), 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let mut state = OptimizerState::new(model.params());
    for _ in 0..200 {
        train_step(&mut model, &[&sample], &mut state, &cfg).unwrap();
    }
    let mse = dataset_mse(&model, std::slice::from_ref(&sample)).unwrap();
    assert!(mse < 1e-3, "{mse}");
}
