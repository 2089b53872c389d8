//! Scalar score functions consumed by the interpreters.
//!
//! [`ClassScore`] adapts a trained [`ScoreModel`] to one class; the analytic
//! functions are low-dimensional fixtures with known curvature, used to check
//! solvers against closed forms and the brute-force oracle.

use crate::error::{invalid, Result};
use crate::model::ScoreModel;
use crate::numerics::Tensor;

/// A differentiable map `R^d → R`.
pub trait ScoreFunction: Sync {
    fn value(&self, x: &Tensor) -> Result<f64>;

    fn gradient(&self, x: &Tensor) -> Result<Tensor>;

    /// `prox_{step·g}(v)`, for nonsmooth functions that are handled through
    /// their proximal map instead of a gradient.
    fn prox(&self, _v: &Tensor, _step: f64) -> Option<Tensor> {
        None
    }

    /// Known weak-convexity constant λ (so that `g + λ/2‖·‖²` is convex).
    fn weak_convexity(&self) -> Option<f64> {
        None
    }

    /// Known Lipschitz constant of the gradient.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

/// `f_{w,c}` for a fixed class `c`.
#[derive(Clone, Copy, Debug)]
pub struct ClassScore<'a> {
    model: &'a ScoreModel,
    class: usize,
}

impl<'a> ClassScore<'a> {
    pub fn new(model: &'a ScoreModel, class: usize) -> Result<Self> {
        if class >= model.classes() {
            return invalid(format!(
                "class index {class} out of range for {} classes",
                model.classes()
            ));
        }
        Ok(Self { model, class })
    }

    pub fn model(&self) -> &ScoreModel {
        self.model
    }

    pub fn class(&self) -> usize {
        self.class
    }
}

impl ScoreFunction for ClassScore<'_> {
    fn value(&self, x: &Tensor) -> Result<f64> {
        self.model.score(x, self.class)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        self.model.grad_input(x, self.class)
    }
}

/// `g(x) = c`.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl ScoreFunction for Constant {
    fn value(&self, _x: &Tensor) -> Result<f64> {
        Ok(self.0)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::zeros(x.shape()))
    }

    fn weak_convexity(&self) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `g(x) = a·x`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub direction: Tensor,
}

impl ScoreFunction for Linear {
    fn value(&self, x: &Tensor) -> Result<f64> {
        self.direction.check_same_shape(x, "linear score")?;
        Ok(self.direction.dot(x))
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        self.direction.check_same_shape(x, "linear score")?;
        Ok(self.direction.clone())
    }

    fn weak_convexity(&self) -> Option<f64> {
        Some(0.0)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `g(x) = ½·a·‖x‖²`; λ-weakly convex with `λ = max(0, −a)`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub curvature: f64,
}

impl ScoreFunction for Quadratic {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(0.5 * self.curvature * x.dot(x))
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.scale(self.curvature))
    }

    fn weak_convexity(&self) -> Option<f64> {
        Some((-self.curvature).max(0.0))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.curvature.abs())
    }
}

/// `g(x) = ‖x‖₁`, nonsmooth; exposes its proximal map (soft-thresholding).
#[derive(Clone, Copy, Debug)]
pub struct AbsoluteValue;

impl ScoreFunction for AbsoluteValue {
    fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(x.data().iter().map(|v| v.abs()).sum())
    }

    /// A subgradient (`sign`, 0 at the kink).
    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.map(|v| if v == 0.0 { 0.0 } else { v.signum() }))
    }

    fn prox(&self, v: &Tensor, step: f64) -> Option<Tensor> {
        crate::prox::soft_threshold(v, step).ok()
    }

    fn weak_convexity(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `g(x) = ½‖x‖² + A·sin(ω·x₀) + c·x₀·x₁` (the coupling term needs `d ≥ 2`).
///
/// The Hessian's smallest eigenvalue is at least `1 − A·ω² − |c|`, so `g` is
/// λ-weakly convex with `λ = max(0, A·ω² + |c| − 1)`.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticSine {
    pub amplitude: f64,
    pub frequency: f64,
    pub coupling: f64,
}

impl QuadraticSine {
    /// `x²/2 + 0.3·sin(5x₀) + 0.2·x₀x₁`.
    pub fn fixture() -> Self {
        Self {
            amplitude: 0.3,
            frequency: 5.0,
            coupling: 0.2,
        }
    }
}

impl ScoreFunction for QuadraticSine {
    fn value(&self, x: &Tensor) -> Result<f64> {
        let d = x.data();
        let mut v = 0.5 * x.dot(x) + self.amplitude * (self.frequency * d[0]).sin();
        if d.len() >= 2 {
            v += self.coupling * d[0] * d[1];
        }
        Ok(v)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        let d = x.data();
        let mut g = d.to_vec();
        g[0] += self.amplitude * self.frequency * (self.frequency * d[0]).cos();
        if d.len() >= 2 {
            g[0] += self.coupling * d[1];
            g[1] += self.coupling * d[0];
        }
        Ok(x.with_data(g))
    }

    fn weak_convexity(&self) -> Option<f64> {
        Some((self.amplitude * self.frequency.powi(2) + self.coupling.abs() - 1.0).max(0.0))
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0 + self.amplitude * self.frequency.powi(2) + self.coupling.abs())
    }
}
