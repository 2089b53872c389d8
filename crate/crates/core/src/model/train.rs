//! Synthetic datasets and a plain mini-batch gradient-descent trainer used
//! to manufacture fixture models.

use super::{argmax, Layer, ScoreModel};
use crate::error::{invalid, Error, Result};
use crate::numerics::{SeededRng, Tensor};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Built-in synthetic classification problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    /// Two isotropic Gaussians in `R^2` with means `±(2, 2)` and std 0.5.
    TwoGaussians,
    /// 8×8 single-channel images: class 0 is a Gaussian blob, class 1 a
    /// straight bar. Every image is scaled to unit ℓ₂ norm.
    BlobsBars,
}

impl Dataset {
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Dataset::TwoGaussians => vec![2],
            Dataset::BlobsBars => vec![1, 8, 8],
        }
    }

    pub fn classes(&self) -> usize {
        2
    }

    pub fn sample(&self, label: usize, rng: &mut SeededRng) -> Tensor {
        match self {
            Dataset::TwoGaussians => {
                let sign = if label == 0 { -1.0 } else { 1.0 };
                let data = (0..2).map(|_| 2.0 * sign + 0.5 * rng.standard_normal()).collect();
                Tensor::from_parts_unchecked(vec![2], data)
            }
            Dataset::BlobsBars => {
                let mut img = vec![0.0; 64];
                if label == 0 {
                    let cy = rng.uniform_range(1.5, 5.5);
                    let cx = rng.uniform_range(1.5, 5.5);
                    for y in 0..8 {
                        for x in 0..8 {
                            let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            img[y * 8 + x] = (-r2 / 2.0).exp();
                        }
                    }
                } else {
                    let line = 1 + rng.below(6);
                    let start = rng.below(3);
                    let vertical = rng.bernoulli();
                    for s in start..start + 6 {
                        let (y, x) = if vertical { (s, line) } else { (line, s) };
                        img[y * 8 + x] = 1.0;
                    }
                }
                for v in img.iter_mut() {
                    *v += 0.05 * rng.standard_normal();
                }
                let norm = img.iter().map(|v| v * v).sum::<f64>().sqrt();
                let data = img.into_iter().map(|v| v / norm).collect();
                Tensor::from_parts_unchecked(vec![1, 8, 8], data)
            }
        }
    }

    /// `n` samples with alternating labels `0, 1, 0, …`.
    pub fn generate(&self, n: usize, rng: &mut SeededRng) -> Vec<(Tensor, usize)> {
        (0..n)
            .map(|i| {
                let label = i % self.classes();
                (self.sample(label, rng), label)
            })
            .collect()
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::TwoGaussians => "two-gaussians",
            Dataset::BlobsBars => "blobs-bars",
        })
    }
}

impl FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-gaussians" => Ok(Dataset::TwoGaussians),
            "blobs-bars" => Ok(Dataset::BlobsBars),
            other => invalid(format!("unknown dataset '{other}' (two-gaussians, blobs-bars)")),
        }
    }
}

/// Network layouts available to [`train_toy`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Dense layers of the given hidden widths with softplus in between.
    Mlp { hidden: Vec<usize> },
    /// Two same-padded 3×3 conv layers with softplus, then a dense head.
    Conv { channels: [usize; 2] },
}

impl Architecture {
    /// The 2-16-16-2 fixture MLP.
    pub fn mlp() -> Self {
        Architecture::Mlp { hidden: vec![16, 16] }
    }

    /// The conv 3×3×8 → conv 3×3×8 → dense fixture net.
    pub fn conv() -> Self {
        Architecture::Conv { channels: [8, 8] }
    }

    fn build(&self, input_shape: &[usize], classes: usize, rng: &mut SeededRng) -> Result<ScoreModel> {
        let mut layers = Vec::new();
        let d: usize = input_shape.iter().product();
        let dense = |inputs: usize, outputs: usize, rng: &mut SeededRng| {
            let scale = (1.0 / inputs as f64).sqrt();
            let weight = (0..inputs * outputs).map(|_| scale * rng.standard_normal()).collect();
            Layer::dense(inputs, outputs, weight, vec![0.0; outputs])
        };
        match self {
            Architecture::Mlp { hidden } => {
                let mut width = d;
                for &h in hidden {
                    layers.push(dense(width, h, rng)?);
                    layers.push(Layer::Softplus);
                    width = h;
                }
                layers.push(dense(width, classes, rng)?);
            }
            Architecture::Conv { channels } => {
                let [c, h, w] = match input_shape {
                    [c, h, w] => [*c, *h, *w],
                    _ => return invalid(format!("conv architecture needs CHW input, got {input_shape:?}")),
                };
                let mut in_c = c;
                for &out_c in channels {
                    let fan_in = (in_c * 9) as f64;
                    let weight = (0..out_c * in_c * 9)
                        .map(|_| (1.0 / fan_in).sqrt() * rng.standard_normal())
                        .collect();
                    layers.push(Layer::conv2d(in_c, out_c, 3, h, w, weight, vec![0.0; out_c])?);
                    layers.push(Layer::Softplus);
                    in_c = out_c;
                }
                layers.push(dense(in_c * h * w, classes, rng)?);
            }
        }
        ScoreModel::new(input_shape.to_vec(), layers)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Mlp { hidden } => write!(f, "mlp{hidden:?}"),
            Architecture::Conv { channels } => write!(f, "conv{channels:?}"),
        }
    }
}

/// Dataset plus training budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub dataset: Dataset,
    pub train_samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub min_accuracy: f64,
    /// The trained output layer is divided by this factor. Predictions are
    /// unchanged; input gradients and curvature shrink by the same factor.
    pub temperature: f64,
}

impl ToyTask {
    pub fn new(dataset: Dataset) -> Self {
        // the conv fixture separates unit-norm images with large logits, so
        // its raw score is about 45-weakly convex; T = 64 brings that below 1
        let (train_samples, epochs, learning_rate, temperature) = match dataset {
            Dataset::TwoGaussians => (1000, 20, 0.1, 1.0),
            Dataset::BlobsBars => (1000, 50, 0.05, 64.0),
        };
        Self {
            dataset,
            train_samples,
            test_samples: 1000,
            epochs,
            batch_size: 20,
            learning_rate,
            weight_decay: 1e-3,
            min_accuracy: 0.95,
            temperature,
        }
    }
}

pub(crate) fn accuracy(model: &ScoreModel, samples: &[(Tensor, usize)]) -> f64 {
    let correct = samples
        .iter()
        .filter(|(x, label)| argmax(&model.scores_unchecked(x.data())) == *label)
        .count();
    correct as f64 / samples.len().max(1) as f64
}

/// Trains `arch` on `task.dataset` and checks held-out accuracy.
///
/// Training, initialisation and the held-out split each draw from their own
/// sub-stream of `rng`, so the result depends only on the seed.
pub fn train_toy(task: &ToyTask, arch: &Architecture, rng: &SeededRng) -> Result<ScoreModel> {
    if task.batch_size == 0 || task.train_samples == 0 || task.test_samples == 0 {
        return invalid("batch size and sample counts must be positive");
    }
    if !(task.temperature > 0.0) || !task.temperature.is_finite() {
        return invalid(format!("temperature must be finite and positive, got {}", task.temperature));
    }
    let mut init_rng = rng.fork(0);
    let mut data_rng = rng.fork(1);
    let mut test_rng = rng.fork(2);
    let mut order_rng = rng.fork(3);

    let shape = task.dataset.input_shape();
    let mut model = arch.build(&shape, task.dataset.classes(), &mut init_rng)?;
    let train = task.dataset.generate(task.train_samples, &mut data_rng);
    let test = task.dataset.generate(task.test_samples, &mut test_rng);

    let mut grads = vec![0.0; model.param_count()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..task.epochs {
        order_rng.shuffle(&mut order);
        for batch in order.chunks(task.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, label) = &train[i];
                model.accumulate_loss_grad(x.data(), *label, &mut grads);
            }
            let step = task.learning_rate / batch.len() as f64;
            model.apply_update(&grads, step, task.weight_decay * batch.len() as f64);
        }
    }
    model.scale_scores(1.0 / task.temperature);
    model.quantize_to_f32();

    let acc = accuracy(&model, &test);
    if task.epochs == 0 || acc < task.min_accuracy {
        return Err(Error::TrainingFailed {
            accuracy: acc,
            epochs: task.epochs,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_gaussians_mlp_reaches_accuracy() {
        let task = ToyTask::new(Dataset::TwoGaussians);
        let model = train_toy(&task, &Architecture::mlp(), &SeededRng::new(7)).unwrap();
        let test = Dataset::TwoGaussians.generate(1000, &mut SeededRng::new(123));
        assert!(accuracy(&model, &test) >= 0.95);
    }

    #[test]
    fn zero_epochs_fails() {
        let mut task = ToyTask::new(Dataset::TwoGaussians);
        task.epochs = 0;
        match train_toy(&task, &Architecture::mlp(), &SeededRng::new(7)) {
            Err(Error::TrainingFailed { epochs: 0, .. }) => {}
            other => panic!("expected training failure, got {other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let task = ToyTask::new(Dataset::TwoGaussians);
        let a = train_toy(&task, &Architecture::mlp(), &SeededRng::new(9)).unwrap();
        let b = train_toy(&task, &Architecture::mlp(), &SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blobs_bars_are_unit_norm() {
        let mut rng = SeededRng::new(1);
        for (x, _) in Dataset::BlobsBars.generate(10, &mut rng) {
            assert!((x.norm() - 1.0).abs() < 1e-12);
            assert_eq!(x.shape(), &[1, 8, 8]);
        }
    }
}
