//! Gradient-based baseline interpreters.

use crate::envelope::smoothed_grad_estimate;
use crate::error::{invalid, Result};
use crate::functions::ScoreFunction;
use crate::numerics::{SeededRng, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Riemann steps for integrated gradients.
    pub ig_steps: usize,
    /// Reference point x⁰; `None` is the zero tensor.
    pub ig_baseline: Option<Tensor>,
    pub sg_sigma: f64,
    pub sg_samples: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ig_steps: 50,
            ig_baseline: None,
            sg_sigma: 0.1,
            sg_samples: 50,
        }
    }
}

pub fn simple_gradient<F: ScoreFunction + ?Sized>(f: &F, x: &Tensor) -> Result<Tensor> {
    f.gradient(x)
}

/// `(Δx/m) ⊙ Σ_{i=1..m} ∇f(x⁰ + (i/m)·Δx)` with `Δx = x − x⁰`
/// (right-endpoint Riemann sum).
pub fn integrated_gradients<F: ScoreFunction + ?Sized>(
    f: &F,
    x: &Tensor,
    cfg: &BaselineConfig,
) -> Result<Tensor> {
    if cfg.ig_steps == 0 {
        return invalid("integrated gradients needs at least one step");
    }
    let zero;
    let base = match &cfg.ig_baseline {
        Some(b) => {
            b.check_same_shape(x, "integrated gradients baseline")?;
            b
        }
        None => {
            zero = Tensor::zeros(x.shape());
            &zero
        }
    };
    let diff = x.sub(base);
    let m = cfg.ig_steps as f64;
    let mut acc = Tensor::zeros(x.shape());
    for i in 1..=cfg.ig_steps {
        let mut point = base.clone();
        point.axpy(i as f64 / m, &diff);
        acc.axpy(1.0, &f.gradient(&point)?);
    }
    Ok(diff.mul(&acc).scale(1.0 / m))
}

/// `(1/t)·Σ ∇f(x + z_i)`, `z_i ~ N(0, σ²I)`.
pub fn smooth_grad<F: ScoreFunction + ?Sized>(
    f: &F,
    x: &Tensor,
    cfg: &BaselineConfig,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    smoothed_grad_estimate(f, x, cfg.sg_sigma, cfg.sg_samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Constant, Linear, Quadratic};

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn linear_and_constant() {
        let a = t(&[2.0, -1.0, 0.5]);
        let f = Linear { direction: a.clone() };
        let x = t(&[1.0, 3.0, -2.0]);
        assert_eq!(simple_gradient(&f, &x).unwrap(), a);
        assert_eq!(simple_gradient(&Constant(1.0), &x).unwrap().count_nonzero(), 0);

        for m in [1, 7, 100] {
            let cfg = BaselineConfig { ig_steps: m, ..Default::default() };
            let ig = integrated_gradients(&f, &x, &cfg).unwrap();
            assert!(ig.distance(&x.mul(&a)) < 1e-12);
        }
        let cfg = BaselineConfig { sg_sigma: 0.5, sg_samples: 9, ..Default::default() };
        let sg = smooth_grad(&f, &x, &cfg, &mut SeededRng::new(1)).unwrap();
        assert!(sg.distance(&a) < 1e-12);
    }

    #[test]
    fn ig_degenerate_path_and_shape_check() {
        let f = Quadratic { curvature: 1.0 };
        let x = t(&[1.0, 2.0]);
        let cfg = BaselineConfig { ig_baseline: Some(x.clone()), ..Default::default() };
        assert_eq!(integrated_gradients(&f, &x, &cfg).unwrap().count_nonzero(), 0);
        let bad = BaselineConfig { ig_baseline: Some(t(&[1.0])), ..Default::default() };
        assert!(integrated_gradients(&f, &x, &bad).is_err());
    }

    #[test]
    fn ig_completeness_on_quadratic() {
        // f = x²/2 from 0 to 2: f(x) − f(0) = 2
        let f = Quadratic { curvature: 1.0 };
        let cfg = BaselineConfig { ig_steps: 100, ..Default::default() };
        let total = integrated_gradients(&f, &t(&[2.0]), &cfg).unwrap().sum();
        // right-endpoint sum: x²(m+1)/(2m) = 2.02, exactly on the 1% bound
        assert!((total - 2.0).abs() / 2.0 <= 0.01 + 1e-12, "{total}");
        assert!((total - 2.02).abs() < 1e-12);
    }

    #[test]
    fn smooth_grad_zero_sigma_and_determinism() {
        let f = Quadratic { curvature: -0.5 };
        let x = t(&[0.4, 1.0]);
        let cfg = BaselineConfig { sg_sigma: 0.0, ..Default::default() };
        assert_eq!(
            smooth_grad(&f, &x, &cfg, &mut SeededRng::new(2)).unwrap(),
            simple_gradient(&f, &x).unwrap()
        );
        let cfg = BaselineConfig::default();
        assert_eq!(
            smooth_grad(&f, &x, &cfg, &mut SeededRng::new(2)).unwrap(),
            smooth_grad(&f, &x, &cfg, &mut SeededRng::new(2)).unwrap()
        );
    }
}
