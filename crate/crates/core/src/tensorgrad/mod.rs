//! Minimal dense reverse-mode automatic differentiation.
//!
//! A [`Graph`] records operations as they are evaluated; [`Graph::backward`]
//! then walks the tape once in reverse. Each graph supports exactly one
//! backward sweep: build a fresh graph per optimization step.

pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Var};
pub use kernels::pixel_center;
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("tensor rank {0} exceeds 4")]
    Rank(usize),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot halve odd spatial size {h}x{w}")]
    OddDimension { h: usize, w: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph")]
    BackwardTwice,
}
