mod common;

use common::*;
use moreaugrad::model::{read_weights, save_weights, load_weights, train_toy, write_weights, Architecture, Dataset, ToyTask};
use moreaugrad::numerics::gaussian_sample;
use moreaugrad::{ScoreModel, SeededRng, Tensor};
use proptest::prelude::*;

/// Largest entrywise gap between the analytic gradient and central
/// differences, relative to the gradient's largest entry.
fn fd_error(model: &ScoreModel, x: &Tensor, class: usize) -> f64 {
    let g = model.grad_input(x, class).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.data().to_vec();
        let mut minus = x.data().to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = model.score(&Tensor::new(x.shape().to_vec(), plus).unwrap(), class).unwrap();
        let fm = model.score(&Tensor::new(x.shape().to_vec(), minus).unwrap(), class).unwrap();
        worst = worst.max(((fp - fm) / (2.0 * h) - g.data()[i]).abs());
    }
    worst / g.max_abs().max(1e-12)
}

#[test]
fn gradient_check_on_fixture_architectures() {
    let mut rng = SeededRng::new(31);
    for model in [conv_fixture(), mlp_fixture()] {
        for _ in 0..20 {
            let scale = if model.input_len() == 2 { 2.0 } else { 1.0 };
            let x = gaussian_sample(&mut rng, model.input_shape(), 1.0).unwrap();
            let x = x.scale(scale / x.norm());
            for class in 0..model.classes() {
                let err = fd_error(&model, &x, class);
                assert!(err < 1e-4, "shape {:?} class {class}: {err:e}", model.input_shape());
            }
        }
    }
}

#[test]
fn fixture_scores_match_golden_file() {
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/golden_scores.json")).unwrap();
    for (key, model, dataset) in [
        ("conv", conv_fixture(), Dataset::BlobsBars),
        ("mlp", mlp_fixture(), Dataset::TwoGaussians),
    ] {
        let x = dataset.generate(1, &mut SeededRng::new(INPUT_SEED)).remove(0).0;
        let scores = model.forward(&x).unwrap();
        let expected: Vec<f64> = serde_json::from_value(golden[key].clone()).unwrap();
        for (s, e) in scores.iter().zip(&expected) {
            assert!((s - e).abs() <= 1e-12 * e.abs().max(1.0), "{key}: {scores:?} vs {expected:?}");
        }
    }
}

#[test]
fn fixtures_reach_accuracy_on_fresh_data() {
    for (model, dataset) in [(conv_fixture(), Dataset::BlobsBars), (mlp_fixture(), Dataset::TwoGaussians)] {
        let test = dataset.generate(1000, &mut SeededRng::new(99));
        let correct = test
            .iter()
            .filter(|(x, label)| model.predict(x).unwrap().class_index == *label)
            .count();
        assert!(correct >= 950, "{dataset}: {correct}/1000");
    }
}

#[test]
fn retraining_reproduces_committed_conv_fixture() {
    let task = ToyTask::new(Dataset::BlobsBars);
    let model = train_toy(&task, &Architecture::conv(), &SeededRng::new(FIXTURE_SEED)).unwrap();
    let mut bytes = Vec::new();
    write_weights(&model, &mut bytes).unwrap();
    assert_eq!(bytes, include_bytes!("fixtures/conv.mgw"));
}

#[test]
fn same_seed_gives_identical_weight_files() {
    let task = ToyTask::new(Dataset::TwoGaussians);
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.mgw"), dir.path().join("b.mgw")];
    for p in &paths {
        let m = train_toy(&task, &Architecture::mlp(), &SeededRng::new(FIXTURE_SEED)).unwrap();
        save_weights(&m, p).unwrap();
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_eq!(a, include_bytes!("fixtures/mlp.mgw"));
    assert_eq!(load_weights(&paths[0]).unwrap(), mlp_fixture());
}

#[test]
fn weight_file_round_trip_preserves_forward() {
    let model = conv_fixture();
    let mut bytes = Vec::new();
    write_weights(&model, &mut bytes).unwrap();
    let back = read_weights(&bytes).unwrap();
    let mut rng = SeededRng::new(5);
    for _ in 0..100 {
        let x = gaussian_sample(&mut rng, model.input_shape(), 0.2).unwrap();
        assert_eq!(model.forward(&x).unwrap(), back.forward(&x).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_ignores_constant_shift(v in prop::collection::vec(-5.0f64..5.0, 2), shift in -100.0f64..100.0) {
        let model = mlp_fixture();
        let x = Tensor::from_vec(v).unwrap();
        let scores = model.forward(&x).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        prop_assert_eq!(moreaugrad::model::argmax(&scores), model.predict(&x).unwrap().class_index);
        prop_assert_eq!(moreaugrad::model::argmax(&shifted), model.predict(&x).unwrap().class_index);
    }

    #[test]
    fn softplus_derivative_in_unit_interval(z in -700.0f64..700.0) {
        let s = moreaugrad::model::sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(moreaugrad::model::softplus(z) >= 0.0);
    }
}
