//! Moreau-envelope saliency maps for differentiable classifiers.
//!
//! The crate computes MoreauGrad interpretations (vanilla, sparse and
//! group-sparse) by proximal gradient descent on the Moreau envelope of a
//! class score, alongside simple-gradient, integrated-gradients and
//! SmoothGrad baselines, interpretation attacks, and the robustness metrics
//! used to compare them. A small CLI (`moreaugrad`) wraps the pipeline.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod baselines;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod functions;
pub mod interpret;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod prox;

pub use envelope::{moreau_grad, EnvelopeConfig, EnvelopeSolution, Sparsity};
pub use error::{Error, Result};
pub use functions::{ClassScore, ScoreFunction};
pub use interpret::Interpreter;
pub use model::ScoreModel;
pub use numerics::{SeededRng, Tensor};
pub use prox::GroupPartition;
