use mcgc::data::{make_lagged_dataset, MultivariateSeries};
use mcgc::generators::simulate_var;
use mcgc::mlp::{train, validation_mse, Activation, DropoutState, InputMask, MlpRegressor, Regime, TrainConfig};
use mcgc::Dataset;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noise-free rotation by 0.3 rad: a linear VAR(1) that neither decays nor grows.
fn rotation_sets() -> (Dataset, Dataset) {
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let coefs = vec![array![[c, -s], [s, c]]];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let values = simulate_var(&coefs, &[array![1.0, 0.0]], 600, 0.0, &mut rng);
    let series = MultivariateSeries::unnamed(values).unwrap();
    let train_set = make_lagged_dataset(&series.slice(0, 500).unwrap(), 1).unwrap();
    let val_set = make_lagged_dataset(&series.slice(500, 600).unwrap(), 1).unwrap();
    (train_set, val_set)
}

#[test]
fn learns_noise_free_linear_var() {
    let (tr, va) = rotation_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = MlpRegressor::new(&[2, 32, 2], Activation::Relu, 0.0, &mut rng).unwrap();
    let config = TrainConfig {
        alpha: 0.0,
        epochs: 400,
        batch_size: 32,
        learning_rate: 3e-3,
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    let before = validation_mse(&model, &va).unwrap();
    let (fitted, history) = train(&model, &tr, &va, &config).unwrap();
    let after = validation_mse(&fitted, &va).unwrap();
    assert!(after <= 1e-3, "validation MSE {after} (started at {before})");
    assert!(fitted.is_fitted());
    assert_eq!(history.epochs.len(), 400);
}

#[test]
fn training_is_deterministic() {
    let (tr, va) = rotation_sets();
    for regime in Regime::ALL {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let model = MlpRegressor::new(&[2, 16, 16, 2], Activation::Tanh, 0.2, &mut rng).unwrap();
            let config = TrainConfig {
                regime,
                epochs: 5,
                seed: 11,
                ..TrainConfig::default()
            };
            train(&model, &tr, &va, &config).unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a.parameters(), b.parameters());
        assert_eq!(ha, hb);
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (tr, va) = rotation_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = MlpRegressor::new(&[2, 8, 2], Activation::Relu, 0.1, &mut rng).unwrap();
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (out, history) = train(&model, &tr, &va, &config).unwrap();
    assert_eq!(out, model);
    assert!(history.epochs.is_empty());
}

#[test]
fn full_batch_linear_loss_never_increases() {
    let (tr, va) = rotation_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = MlpRegressor::new(&[2, 4, 2], Activation::Identity, 0.0, &mut rng).unwrap();
    let config = TrainConfig {
        alpha: 0.0,
        epochs: 200,
        batch_size: tr.len(),
        learning_rate: 1e-4,
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    let (_, history) = train(&model, &tr, &va, &config).unwrap();
    for w in history.epochs.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss, "epoch {}: {} > {}", w[1].epoch, w[1].train_loss, w[0].train_loss);
    }
}

#[test]
fn diverging_training_reports_epoch() {
    let (tr, va) = rotation_sets();
    let mut big = tr.clone();
    big.targets.mapv_inplace(|v| v * 1e200);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = MlpRegressor::new(&[2, 4, 2], Activation::Identity, 0.0, &mut rng).unwrap();
    let err = train(&model, &big, &va, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, mcgc::Error::Diverged { epoch: 0, .. }), "{err}");
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alpha = 0.3;
    let model = MlpRegressor::<f64>::new(&[4, 32, 3], Activation::Tanh, alpha, &mut rng).unwrap();
    let x = Array2::from_shape_fn((1, 4), |_| rng.random_range(-1.0..1.0));
    let reference = model.forward(&x, None, None).unwrap();
    let draws = 10_000;
    let mut sum = Array1::<f64>::zeros(3);
    let mut sum_sq = Array1::<f64>::zeros(3);
    for k in 0..draws {
        let y = model.forward(&x, None, Some(DropoutState::new(k))).unwrap();
        let row = y.row(0);
        sum += &row;
        sum_sq += &row.mapv(|v| v * v);
    }
    let n = draws as f64;
    for j in 0..3 {
        let mean = sum[j] / n;
        let var = (sum_sq[j] - n * mean * mean) / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - reference[[0, j]]).abs() < 3.0 * se, "output {j}: {mean} vs {} (se {se})", reference[[0, j]]);
    }
}

proptest! {
    #[test]
    fn masking_equals_zeroing(seed in 0u64..1000, dropped in 0usize..3, dropout_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, k) = (3, 2);
        let model = MlpRegressor::<f64>::new(&[k * p, 8, p], Activation::Relu, 0.2, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, k * p), |_| rng.random_range(-2.0..2.0));
        let mut zeroed = x.clone();
        for lag in 0..k {
            zeroed.column_mut(lag * p + dropped).fill(0.0);
        }
        let mask = InputMask::dropping(p, dropped).unwrap();
        let d = Some(DropoutState::new(dropout_seed));
        let a = model.forward(&x, Some(&mask), d).unwrap();
        let b = model.forward(&zeroed, None, d).unwrap();
        prop_assert_eq!(a, b);
    }
}
