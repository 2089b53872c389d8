mod common;

use common::*;
use moreaugrad::attack::{gaussian_attack, topk_attack, topk_attack_batch, AttackConfig};
use moreaugrad::metrics::{compare_maps, default_k, median, topk_intersection};
use moreaugrad::{ClassScore, Interpreter, ScoreModel, SeededRng, Tensor};

const BATCH_SEED: u64 = 11;

/// Mean top-k intersection of simple-gradient maps after the ε = 0.5 attack
/// on the 50 held-out conv fixture inputs (batch seed 11).
const GOLDEN_SIMPLE_GRAD_TOPK: f64 = 137.0 / 300.0;

fn maps(model: &ScoreModel, interp: &Interpreter, x: &Tensor, adv: &Tensor, c: usize) -> (Tensor, Tensor) {
    let f = ClassScore::new(model, c).unwrap();
    (
        interp.interpret(&f, x, &mut SeededRng::new(0)).unwrap(),
        interp.interpret(&f, adv, &mut SeededRng::new(0)).unwrap(),
    )
}

#[test]
fn simple_gradient_attack_golden_damage() {
    let model = conv_fixture();
    let inputs = conv_inputs(&model, 50);
    let k = default_k(&inputs[0].0);
    assert_eq!(k, 6);
    let interp = Interpreter::SimpleGradient;
    let results = topk_attack_batch(&model, &interp, &inputs, &AttackConfig::new(0.5, k), BATCH_SEED);
    let mut ratios = Vec::new();
    for (res, (x, c)) in results.iter().zip(&inputs) {
        let res = res.as_ref().unwrap();
        assert!(res.delta_norm <= 0.5 + 1e-12);
        assert!(res.prediction_preserved);
        assert_eq!(model.predict(&res.x_adv).unwrap().class_index, *c);
        let (clean, adv) = maps(&model, &interp, x, &res.x_adv, *c);
        assert_eq!(topk_intersection(&clean, &clean, k).unwrap(), 1.0);
        ratios.push(topk_intersection(&clean, &adv, k).unwrap());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("mean top-k after attack: {mean:?}");
    assert!(mean < 0.9);
    assert!((mean - GOLDEN_SIMPLE_GRAD_TOPK).abs() < 1e-12, "{mean:?}");
}

#[test]
fn damage_is_monotone_in_budget() {
    let model = conv_fixture();
    let inputs = conv_inputs(&model, 20);
    let interp = Interpreter::SimpleGradient;
    let mut prev = -1.0;
    for eps in [0.0, 0.25, 0.5, 1.0] {
        let results = topk_attack_batch(&model, &interp, &inputs, &AttackConfig::new(eps, 6), BATCH_SEED);
        let dists = results.iter().zip(&inputs).map(|(res, (x, c))| {
            let res = res.as_ref().unwrap();
            assert!(res.delta_norm <= eps + 1e-12);
            let (clean, adv) = maps(&model, &interp, x, &res.x_adv, *c);
            compare_maps(&clean, &adv, 6, "", "simple-grad", eps).unwrap().normalized_distance
        });
        let med = median(dists);
        if eps == 0.0 {
            assert_eq!(med, 0.0);
        }
        assert!(med >= prev, "eps {eps}: {med} < {prev}");
        prev = med;
    }
}

#[test]
fn batch_matches_sequential_streams() {
    let model = conv_fixture();
    let inputs = conv_inputs(&model, 4);
    let interp = Interpreter::SimpleGradient;
    let mut cfg = AttackConfig::new(0.5, 6);
    cfg.steps = 5;
    let batch = topk_attack_batch(&model, &interp, &inputs, &cfg, BATCH_SEED);
    for (i, ((x, c), b)) in inputs.iter().zip(batch).enumerate() {
        let mut rng = SeededRng::with_stream(BATCH_SEED, i as u64);
        let seq = topk_attack(&model, &interp, x, *c, &cfg, &mut rng).unwrap();
        assert_eq!(seq, b.unwrap());
    }
}

#[test]
fn gaussian_attack_on_fixture_inputs() {
    let model = conv_fixture();
    let mut rng = SeededRng::new(6);
    for (x, _) in conv_inputs(&model, 10) {
        let adv = gaussian_attack(&x, 0.5, &mut rng).unwrap();
        assert!((adv.distance(&x) - 0.5).abs() < 1e-12);
    }
}
