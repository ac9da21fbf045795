//! Patch-level diffusion posterior sampling for reflectance maps.

// Index loops read better in the numeric kernels; `!(x > 0.0)` is used on
// purpose so NaN takes the error path.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod grid;
pub mod guidance;
pub mod io;
pub mod maps;
pub mod metrics;
pub mod render;
pub mod synth;
pub mod tiler;

pub use error::{Error, Result};
pub use grid::Grid;
