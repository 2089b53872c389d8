//! Method dispatch over every interpreter in the crate.

use crate::baselines::{integrated_gradients, simple_gradient, smooth_grad, BaselineConfig};
use crate::envelope::{moreau_grad, EnvelopeConfig, Sparsity};
use crate::error::{invalid, Result};
use crate::functions::ScoreFunction;
use crate::numerics::{SeededRng, Tensor};
use serde::{Deserialize, Serialize};

/// A saliency method together with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpreter {
    SimpleGradient,
    IntegratedGradients(BaselineConfig),
    SmoothGrad(BaselineConfig),
    /// Vanilla, sparse or group-sparse MoreauGrad depending on the config.
    MoreauGrad(EnvelopeConfig),
    /// Returns the same map whatever the input.
    Constant(Tensor),
}

impl Interpreter {
    /// CLI-style method name.
    pub fn name(&self) -> &'static str {
        match self {
            Interpreter::SimpleGradient => "simple-grad",
            Interpreter::IntegratedGradients(_) => "integrated-grad",
            Interpreter::SmoothGrad(_) => "smooth-grad",
            Interpreter::MoreauGrad(cfg) => match cfg.sparsity {
                Sparsity::Vanilla => "moreau",
                Sparsity::Sparse => "sparse-moreau",
                Sparsity::GroupSparse(_) => "group-sparse-moreau",
            },
            Interpreter::Constant(_) => "constant",
        }
    }

    /// Whether the output depends on the random stream.
    pub fn is_stochastic(&self) -> bool {
        match self {
            Interpreter::SmoothGrad(cfg) => cfg.sg_sigma > 0.0,
            Interpreter::MoreauGrad(cfg) => cfg.smoothing.is_some_and(|s| s.sigma > 0.0),
            _ => false,
        }
    }

    pub fn interpret<F: ScoreFunction + ?Sized>(
        &self,
        f: &F,
        x: &Tensor,
        rng: &mut SeededRng,
    ) -> Result<Tensor> {
        match self {
            Interpreter::SimpleGradient => simple_gradient(f, x),
            Interpreter::IntegratedGradients(cfg) => integrated_gradients(f, x, cfg),
            Interpreter::SmoothGrad(cfg) => smooth_grad(f, x, cfg, rng),
            Interpreter::MoreauGrad(cfg) => Ok(moreau_grad(f, x, cfg, rng)?.saliency),
            Interpreter::Constant(map) => {
                if !map.same_shape(x) {
                    return invalid(format!(
                        "constant map shape {:?} does not match input {:?}",
                        map.shape(),
                        x.shape()
                    ));
                }
                Ok(map.clone())
            }
        }
    }
}
