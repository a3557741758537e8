//! Decomposition of animated graphics into sprites.
//!
//! A video is explained as a back-to-front stack of sprites, each a static
//! RGBA texture moved by a per-frame affine transform and faded by a
//! per-frame opacity. The decomposition fits those parameters by gradient
//! descent through a differentiable layered renderer.

pub mod datagen;
pub mod edit;
pub mod error;
pub mod init;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod prior;
pub mod render;
pub mod tensorgrad;
pub mod track;

pub use error::{Error, Result};
