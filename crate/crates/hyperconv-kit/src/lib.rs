//! hyperconv-kit: HyperConvolution layers (per-input filters predicted by a
//! pooled-feature MLP), an analytic FLOP/parameter accountant, the HyperUNet
//! image-enhancement architecture, SSIM/MS-SSIM metrics, and a deterministic
//! training harness.
//!
//! The point of the layer family is that the MLP predicting the filters does
//! not scale with image resolution, so parameter count can grow almost
//! independently of FLOP count. See the `examples/` directory for runnable
//! entry points into each capability.

pub mod arch;
pub mod cli;
pub mod cost;
pub mod data;
pub mod error;
pub mod hyper;
pub mod image;
pub mod metrics;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
