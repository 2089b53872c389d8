#![allow(dead_code)]

use moreaugrad::metrics::{ssim_plane, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
use moreaugrad::model::{read_weights, Dataset};
use moreaugrad::{ScoreModel, SeededRng, Tensor};
use std::path::PathBuf;

/// Seed the committed fixtures were trained with.
pub const FIXTURE_SEED: u64 = 7;
/// Seed for held-out fixture inputs (never used in training).
pub const INPUT_SEED: u64 = 2024;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `train-toy --dataset blobs-bars --arch conv --seed 7`, frozen.
pub fn conv_fixture() -> ScoreModel {
    read_weights(include_bytes!("../fixtures/conv.mgw")).unwrap()
}

/// `train-toy --dataset two-gaussians --arch mlp --seed 7`, frozen.
pub fn mlp_fixture() -> ScoreModel {
    read_weights(include_bytes!("../fixtures/mlp.mgw")).unwrap()
}

/// Held-out blob/bar images paired with the fixture's predicted class.
pub fn conv_inputs(model: &ScoreModel, n: usize) -> Vec<(Tensor, usize)> {
    labelled(model, Dataset::BlobsBars, n)
}

pub fn mlp_inputs(model: &ScoreModel, n: usize) -> Vec<(Tensor, usize)> {
    labelled(model, Dataset::TwoGaussians, n)
}

fn labelled(model: &ScoreModel, dataset: Dataset, n: usize) -> Vec<(Tensor, usize)> {
    dataset
        .generate(n, &mut SeededRng::new(INPUT_SEED))
        .into_iter()
        .map(|(x, _)| {
            let c = model.predict(&x).unwrap().class_index;
            (x, c)
        })
        .collect()
}

pub fn rel_l2(a: &Tensor, b: &Tensor) -> f64 {
    a.distance(b) / b.norm()
}

/// Direct per-window SSIM: 2-D Gaussian weights, one window at a time.
pub fn ssim_reference(a: &Tensor, b: &Tensor) -> f64 {
    let (h, w, pa) = ssim_plane(a);
    let (_, _, pb) = ssim_plane(b);
    let k = SSIM_WINDOW;
    let c = (k / 2) as f64;
    let mut weights = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            weights[i * k + j] = (-r2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);

    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - k {
        for x in 0..=w - k {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let idx = (y + i) * w + x + j;
                    ma += weights[i * k + j] * pa[idx];
                    mb += weights[i * k + j] * pb[idx];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let idx = (y + i) * w + x + j;
                    let wt = weights[i * k + j];
                    va += wt * (pa[idx] - ma).powi(2);
                    vb += wt * (pb[idx] - mb).powi(2);
                    cov += wt * (pa[idx] - ma) * (pb[idx] - mb);
                }
            }
            sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    sum / count as f64
}
