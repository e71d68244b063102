//! Minimal reverse-mode automatic differentiation plus the layer vocabulary
//! the timing and synthesis models share: embeddings, linear maps, layer
//! normalization, dropout, multi-head self-attention, the two-convolution
//! position-wise feed-forward block, sinusoidal positional encoding, and
//! Adam with the warmup/annealing learning-rate schedule.
//!
//! Design notes:
//!
//! - [`Tensor`] wraps an `Rc` node in a dynamically built computation
//!   graph. Calling [`Tensor::backward`] on a scalar loss walks the graph
//!   in reverse creation order and accumulates gradients into every
//!   parameter reachable from it. [`Tensor::from_op`] lets downstream
//!   crates define custom differentiable ops (the synthesis model's
//!   polyphonic mixer does this).
//! - Everything is generic over [`Real`]: models train in `f32`; gradient
//!   checking runs the same code in `f64`, where central finite differences
//!   are trustworthy to ~1e-8.
//! - Single-threaded and deterministic by construction: all randomness
//!   (init, dropout) flows from caller-provided ChaCha8 RNGs, and
//!   parameters live in insertion-ordered sets, so a fixed seed gives
//!   bit-identical training runs.

mod checkpoint;
mod layers;
mod ops;
mod optim;
mod tensor;

pub use checkpoint::{apply_entries, load_checkpoint, save_checkpoint, CheckpointEntry};
pub use layers::{
    sinusoidal_pe, Embedding, LayerNorm, Linear, TransformerLayer, TransformerLayerConfig,
};
pub use ops::{concat_cols, gather_rows};
pub use optim::{grad_check, lr_schedule, Adam, ParamSet};
pub use tensor::{Real, Tensor};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Forward-pass mode: dropout fires only in training.
pub enum Mode<'r> {
    Eval,
    Train { rng: &'r mut ChaCha8Rng },
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("gradient for parameter \"{name}\" is not finite; aborting the step")]
    NonFiniteGradient { name: String },

    #[error("learning-rate schedule is defined for steps >= 1")]
    ZeroStep,

    #[error("sinusoidal positional encoding needs an even dimension, got {0}")]
    OddPeDim(usize),

    #[error("gradient check objective is not finite")]
    NonFiniteObjective,

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
