use wxvae_core::data::{
    gen_synthetic_monsoon, normalize, window_samples, CubeDataset, FieldCube, MonsoonGenConfig,
    Role, Units, WindowConfig,
};
use wxvae_core::gradcheck::toy_config;
use wxvae_core::model::{ModelConfig, VaeParams};
use wxvae_core::rng;
use wxvae_core::train::{beta_schedule, train, train_with, validation_split, TrainConfig};
use wxvae_core::Error;

fn toy_dataset(n: usize, seed: u64) -> CubeDataset {
    let series = gen_synthetic_monsoon(&MonsoonGenConfig {
        seed,
        ..MonsoonGenConfig::default()
    })
    .unwrap();
    let cfg = WindowConfig {
        window_days: 8,
        n_boxes: 4,
        box_extent: (12, 12),
        n_samples: n,
        resize_to: (8, 8),
        seed,
        ..WindowConfig::desk()
    };
    let cubes = window_samples(&series, &cfg).unwrap();
    normalize(CubeDataset::new(cubes, None, Role::Train).unwrap()).unwrap()
}

fn toy_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        warmup_epochs: 0,
        ..TrainConfig::for_model(&toy_config())
    }
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let model = toy_config();
    let cube = FieldCube::new(
        [8, 8, 8],
        (0..512).map(|i| (i % 7) as f32 / 7.0).collect(),
        Units::Normalized,
    )
    .unwrap();
    let data = CubeDataset::new(
        vec![cube; 10],
        Some(wxvae_core::data::NormStats::new(3.0).unwrap()),
        Role::Train,
    )
    .unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        ..toy_train(2)
    };
    let (params, history) = train(&data, &model, &cfg).unwrap();
    let init =
        VaeParams::<f32>::init(&model, &mut rng::seeded(cfg.seed, rng::stream::INIT)).unwrap();
    assert_eq!(params, init);
    assert_eq!(history.records.len(), 2);
}

#[test]
fn identical_seeds_give_identical_history() {
    let data = toy_dataset(60, 1);
    let cfg = TrainConfig {
        seed: 5,
        ..toy_train(3)
    };
    let a = train(&data, &toy_config(), &cfg).unwrap();
    let b = train(&data, &toy_config(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = train(&data, &toy_config(), &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.1, c.1);
}

#[test]
fn warm_up_applies_zero_beta() {
    let data = toy_dataset(40, 2);
    let cfg = TrainConfig {
        warmup_epochs: 10,
        beta_target: 0.05,
        early_stop_patience: 100,
        ..toy_train(12)
    };
    let (_, history) = train(&data, &toy_config(), &cfg).unwrap();
    assert_eq!(history.records.len(), 12);
    for r in &history.records {
        let expect = if r.epoch < 10 { 0.0 } else { 0.05 };
        assert_eq!(r.beta, expect, "epoch {}", r.epoch);
        assert_eq!(r.beta, beta_schedule(r.epoch, &cfg));
    }
}

#[test]
fn zero_beta_is_a_plain_autoencoder() {
    let data = toy_dataset(40, 3);
    let base = TrainConfig {
        beta_target: 0.0,
        ..toy_train(4)
    };
    let (p0, h0) = train(&data, &toy_config(), &base).unwrap();
    let (p1, h1) = train(
        &data,
        &toy_config(),
        &TrainConfig {
            warmup_epochs: 3,
            warmup_ramp: true,
            ..base.clone()
        },
    )
    .unwrap();
    // with β = 0 the schedule cannot matter and the KL term never enters the total
    assert_eq!(p0, p1);
    assert_eq!(h0, h1);
    for r in &h0.records {
        assert_eq!(r.train_total, r.train_rec);
        assert!(r.train_reg > 0.0);
    }
}

#[test]
fn best_epoch_params_are_returned() {
    let data = toy_dataset(60, 4);
    let cfg = TrainConfig {
        early_stop_patience: 2,
        early_stop_min_delta: 0.05,
        ..toy_train(30)
    };
    let (params, history) = train(&data, &toy_config(), &cfg).unwrap();
    assert!(
        history.stopped_epoch < 29,
        "min_delta this large must trigger the early stop"
    );
    assert!(history.best_epoch <= history.stopped_epoch);
    let best_val = history.best().val_total;
    assert!(history.records.iter().all(|r| r.val_total >= best_val));
    let (replay, _) = train(
        &data,
        &toy_config(),
        &TrainConfig {
            epochs: history.best_epoch + 1,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(params, replay);
}

#[test]
fn observer_sees_every_epoch() {
    let data = toy_dataset(40, 5);
    let mut seen = Vec::new();
    let (_, history) = train_with(&data, &toy_config(), &toy_train(3), |r| seen.push(*r)).unwrap();
    assert_eq!(seen, history.records);
}

#[test]
fn desk_training_reduces_reconstruction_loss() {
    let series = gen_synthetic_monsoon(&MonsoonGenConfig::default()).unwrap();
    let cubes = window_samples(
        &series,
        &WindowConfig {
            n_samples: 1000,
            ..WindowConfig::desk()
        },
    )
    .unwrap();
    let data = normalize(CubeDataset::new(cubes, None, Role::Train).unwrap()).unwrap();
    let model = ModelConfig::desk();
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::for_model(&model)
    };
    let (_, history) = train(&data, &model, &cfg).unwrap();
    let first = history.records[0].train_rec;
    let last = history.records.last().unwrap().train_rec;
    assert!(last < first, "train_rec {first} -> {last}");
}

#[test]
fn divergence_names_epoch_and_batch() {
    let data = toy_dataset(40, 6);
    let cfg = TrainConfig {
        lr: 1e30,
        ..toy_train(3)
    };
    match train(&data, &toy_config(), &cfg) {
        Err(Error::NonFinite(msg)) => {
            assert!(msg.contains("epoch") && msg.contains("batch"), "{msg}")
        }
        other => panic!("expected a non-finite error, got {:?}", other.map(|r| r.1)),
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    let one = toy_dataset(1, 7);
    assert!(matches!(
        train(&one, &toy_config(), &toy_train(1)),
        Err(Error::Config(_))
    ));
    assert!(validation_split(10, 0.01, 0).is_err());
    assert!(validation_split(10, 0.99, 0).is_err());

    let data = toy_dataset(20, 7);
    assert!(matches!(
        train(&data, &toy_config(), &toy_train(0)),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        train(&data, &ModelConfig::desk(), &toy_train(1)),
        Err(Error::Config(_))
    ));
    let physical = CubeDataset::new(
        data.cubes()
            .iter()
            .map(|c| FieldCube::new(c.extent(), c.values().to_vec(), Units::Physical).unwrap())
            .collect(),
        None,
        Role::Train,
    )
    .unwrap();
    assert!(matches!(
        train(&physical, &toy_config(), &toy_train(1)),
        Err(Error::Data(_))
    ));
}

#[test]
fn validation_split_is_a_seeded_partition() {
    let (t, v) = validation_split(100, 0.1, 3).unwrap();
    assert_eq!((t.len(), v.len()), (90, 10));
    let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_eq!(validation_split(100, 0.1, 3).unwrap(), (t, v.clone()));
    assert_ne!(validation_split(100, 0.1, 4).unwrap().1, v);
}
