//! Tensor container, seeded randomness, and the norms used across the crate.

mod rng;
mod tensor;

pub use rng::SeededRng;
pub use tensor::Tensor;

use crate::error::{invalid, Result};
use crate::prox::GroupPartition;

/// Euclidean norm of the flattened tensor.
pub fn l2_norm(v: &Tensor) -> Result<f64> {
    if v.is_empty() {
        return invalid("l2_norm of an empty tensor");
    }
    Ok(v.norm())
}

pub fn l1_norm(v: &Tensor) -> f64 {
    v.data().iter().map(|x| x.abs()).sum()
}

/// `Σ_i ‖v_{S_i}‖₂` over the groups of `partition`.
pub fn group_norm_21(v: &Tensor, partition: &GroupPartition) -> Result<f64> {
    partition.check_dimension(v.len())?;
    Ok(partition
        .groups()
        .iter()
        .map(|g| g.iter().map(|&i| v.data()[i].powi(2)).sum::<f64>().sqrt())
        .sum())
}

/// I.i.d. `N(0, sigma²)` entries drawn from `rng`.
pub fn gaussian_sample(rng: &mut SeededRng, shape: &[usize], sigma: f64) -> Result<Tensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be finite and >= 0, got {sigma}"));
    }
    if shape.is_empty() || shape.contains(&0) {
        return invalid(format!("invalid sample shape {shape:?}"));
    }
    let n: usize = shape.iter().product();
    if sigma == 0.0 {
        return Ok(Tensor::zeros(shape));
    }
    let data = (0..n).map(|_| sigma * rng.standard_normal()).collect();
    Ok(Tensor::from_parts_unchecked(shape.to_vec(), data))
}
