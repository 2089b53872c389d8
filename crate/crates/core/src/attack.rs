//! Interpretation attacks: the ℓ₂-bounded top-k attack and the Gaussian
//! random perturbation.
//!
//! The top-k attack minimizes `Σ_{i∈K} m_i`, where `K` holds the `k` most
//! salient positions of the clean map and `m_i = |I(x+δ)_i| / Σ_j |I(x+δ)_j|`
//! is the intensity share of position `i` in the current map. The gradient of
//! that objective is estimated by central differences along random
//! directions, so any [`Interpreter`] can be attacked. Each step moves along
//! the normalized descent direction and is projected back onto the ε-ball;
//! steps that would flip the prediction are rolled back and halve the step.

use crate::error::{invalid, Error, Result};
use crate::functions::ClassScore;
use crate::interpret::Interpreter;
use crate::metrics::topk_indices;
use crate::model::ScoreModel;
use crate::numerics::{gaussian_sample, SeededRng, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// ℓ₂ budget ε.
    pub epsilon: f64,
    /// Size of the salient set K.
    pub k: usize,
    pub steps: usize,
    pub step_size: f64,
    /// Random directions per finite-difference gradient estimate.
    pub directions: usize,
    /// Finite-difference half-width.
    pub fd_step: f64,
}

impl AttackConfig {
    pub fn new(epsilon: f64, k: usize) -> Self {
        Self {
            epsilon,
            k,
            steps: 20,
            step_size: epsilon / 4.0,
            directions: 20,
            fd_step: 1e-3,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.k == 0 || self.k > d {
            return invalid(format!("k must be in 1..={d}, got {}", self.k));
        }
        if self.epsilon > 0.0 && (!(self.step_size > 0.0) || self.steps == 0) {
            return invalid("attack needs positive step size and at least one step");
        }
        if self.directions == 0 || !(self.fd_step > 0.0) {
            return invalid("finite differences need >= 1 direction and a positive step");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub x_adv: Tensor,
    pub delta_norm: f64,
    pub prediction_preserved: bool,
    pub steps_taken: usize,
    /// Objective at δ = 0 and at the returned iterate.
    pub initial_objective: f64,
    pub final_objective: f64,
}

struct TopKObjective<'a> {
    score: ClassScore<'a>,
    interpreter: &'a Interpreter,
    x: &'a Tensor,
    salient: Vec<usize>,
    seed: u64,
}

impl TopKObjective<'_> {
    fn map(&self, point: &Tensor) -> Result<Tensor> {
        // common random numbers: stochastic interpreters see the same noise at every probe
        let mut rng = SeededRng::new(self.seed);
        let map = self.interpreter.interpret(&self.score, point, &mut rng)?;
        if !map.same_shape(point) || !map.is_finite() {
            return Err(Error::UnsupportedInterpreter(format!(
                "{} returned a map unusable for finite differences",
                self.interpreter.name()
            )));
        }
        Ok(map)
    }

    fn value(&self, delta: &Tensor) -> Result<f64> {
        let map = self.map(&self.x.add(delta))?;
        let total: f64 = map.data().iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok(self.salient.iter().map(|&i| map.data()[i].abs()).sum::<f64>() / total)
    }
}

/// Projection onto the ℓ₂ ball of radius `epsilon`.
fn project(delta: Tensor, epsilon: f64) -> Tensor {
    let n = delta.norm();
    if n > epsilon {
        delta.scale(epsilon / n)
    } else {
        delta
    }
}

pub fn topk_attack(
    model: &ScoreModel,
    interpreter: &Interpreter,
    x: &Tensor,
    class: usize,
    cfg: &AttackConfig,
    rng: &mut SeededRng,
) -> Result<AttackResult> {
    cfg.validate(x.len())?;
    let predicted = model.predict(x)?.class_index;
    if predicted != class {
        return Err(Error::Precondition(format!(
            "input is classified as {predicted}, not {class}"
        )));
    }
    let score = ClassScore::new(model, class)?;
    let seed = rng.next_u64();
    let mut objective = TopKObjective {
        score,
        interpreter,
        x,
        salient: Vec::new(),
        seed,
    };
    let clean = objective.map(x)?;
    objective.salient = topk_indices(clean.data(), cfg.k);
    let initial = objective.value(&Tensor::zeros(x.shape()))?;

    let mut best = (initial, Tensor::zeros(x.shape()));
    let mut steps_taken = 0;
    if cfg.epsilon > 0.0 {
        let mut delta = Tensor::zeros(x.shape());
        let mut step = cfg.step_size;
        let scale = x.len() as f64 / cfg.directions as f64;
        for _ in 0..cfg.steps {
            steps_taken += 1;
            let mut grad = Tensor::zeros(x.shape());
            for _ in 0..cfg.directions {
                let u = gaussian_sample(rng, x.shape(), 1.0)?;
                let u = u.scale(1.0 / u.norm());
                let mut plus = delta.clone();
                plus.axpy(cfg.fd_step, &u);
                let mut minus = delta.clone();
                minus.axpy(-cfg.fd_step, &u);
                let slope = (objective.value(&plus)? - objective.value(&minus)?) / (2.0 * cfg.fd_step);
                grad.axpy(scale * slope, &u);
            }
            let gnorm = grad.norm();
            if gnorm == 0.0 {
                break;
            }
            let mut candidate = delta.clone();
            candidate.axpy(-step / gnorm, &grad);
            let candidate = project(candidate, cfg.epsilon);
            if model.predict(&x.add(&candidate))?.class_index != class {
                step /= 2.0;
                continue;
            }
            delta = candidate;
            let value = objective.value(&delta)?;
            if value < best.0 {
                best = (value, delta.clone());
            }
        }
    }

    let (final_objective, delta) = best;
    let x_adv = x.add(&delta);
    let prediction_preserved = model.predict(&x_adv)?.class_index == class;
    Ok(AttackResult {
        delta_norm: delta.norm(),
        x_adv,
        prediction_preserved,
        steps_taken,
        initial_objective: initial,
        final_objective,
    })
}

/// Attacks every `(input, class)` pair in parallel; item `i` draws from
/// stream `i` of `seed`.
pub fn topk_attack_batch(
    model: &ScoreModel,
    interpreter: &Interpreter,
    inputs: &[(Tensor, usize)],
    cfg: &AttackConfig,
    seed: u64,
) -> Vec<Result<AttackResult>> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, (x, c))| {
            let mut rng = SeededRng::with_stream(seed, i as u64);
            topk_attack(model, interpreter, x, *c, cfg, &mut rng)
        })
        .collect()
}

/// `x + ε·z/‖z‖₂` with standard Gaussian `z`.
pub fn gaussian_attack(x: &Tensor, epsilon: f64, rng: &mut SeededRng) -> Result<Tensor> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return invalid(format!("epsilon must be finite and >= 0, got {epsilon}"));
    }
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let z = gaussian_sample(rng, x.shape(), 1.0)?;
    Ok(x.add(&z.scale(epsilon / z.norm())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;

    fn tiny_model() -> ScoreModel {
        ScoreModel::new(
            vec![3],
            vec![
                Layer::dense(3, 4, vec![1.0, -0.5, 0.3, 0.2, 0.8, -1.0, -0.7, 0.1, 0.6, 0.4, 0.4, 0.4], vec![0.0; 4]).unwrap(),
                Layer::Softplus,
                Layer::dense(4, 2, vec![1.0, 0.5, -1.0, 0.2, -1.0, -0.5, 1.0, -0.2], vec![0.0; 2]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn gaussian_attack_magnitude() {
        let mut rng = SeededRng::new(4);
        let x = Tensor::from_vec(vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(gaussian_attack(&x, 0.0, &mut rng).unwrap(), x);
        for eps in [0.01, 0.5, 3.0] {
            let adv = gaussian_attack(&x, eps, &mut rng).unwrap();
            assert!((adv.distance(&x) - eps).abs() < 1e-9);
        }
        let a = gaussian_attack(&x, 1.0, &mut SeededRng::new(8)).unwrap();
        let b = gaussian_attack(&x, 1.0, &mut SeededRng::new(8)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_attack(&x, -1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_budget_and_misclassified_input() {
        let model = tiny_model();
        let x = Tensor::from_vec(vec![1.0, 0.5, -0.2]).unwrap();
        let c = model.predict(&x).unwrap().class_index;
        let cfg = AttackConfig::new(0.0, 1);
        let res = topk_attack(&model, &Interpreter::SimpleGradient, &x, c, &cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(res.x_adv, x);
        assert_eq!(res.delta_norm, 0.0);
        let err = topk_attack(&model, &Interpreter::SimpleGradient, &x, 1 - c, &cfg, &mut SeededRng::new(1));
        assert!(matches!(err, Err(Error::Precondition(_))));
        assert!(topk_attack(&model, &Interpreter::SimpleGradient, &x, c, &AttackConfig::new(0.1, 4), &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn constant_interpreter_is_untouched() {
        let model = tiny_model();
        let x = Tensor::from_vec(vec![1.0, 0.5, -0.2]).unwrap();
        let c = model.predict(&x).unwrap().class_index;
        let interp = Interpreter::Constant(Tensor::from_vec(vec![0.1, 0.9, -0.3]).unwrap());
        let res = topk_attack(&model, &interp, &x, c, &AttackConfig::new(0.5, 1), &mut SeededRng::new(2)).unwrap();
        assert_eq!(res.x_adv, x);
        assert_eq!(res.final_objective, res.initial_objective);
    }

    #[test]
    fn budget_and_prediction_respected() {
        let model = tiny_model();
        let mut rng = SeededRng::new(3);
        for _ in 0..10 {
            let x = gaussian_sample(&mut rng, &[3], 1.0).unwrap();
            let c = model.predict(&x).unwrap().class_index;
            let cfg = AttackConfig::new(0.4, 1);
            let res = topk_attack(&model, &Interpreter::SimpleGradient, &x, c, &cfg, &mut rng).unwrap();
            assert!(res.delta_norm <= 0.4 + 1e-12);
            assert!(res.prediction_preserved);
            assert!(res.final_objective <= res.initial_objective);
        }
    }
}
