//! Convolution, pooling, padding, resampling and activation primitives
//! with autodiff support.
//!
//! Convolution uses cross-correlation semantics (no kernel flip), matching
//! the usual deep-learning convention. Accumulation order is fixed, so
//! outputs are bit-stable and independent of batch composition.

mod act;
mod conv;
mod pad;
mod pool;
mod resize;


pub use act::{gelu, hard_sigmoid, leaky_relu, relu, sigmoid};
pub use conv::conv2d;
pub use pad::{pad2d, reflection_pad, PadMode};
pub use pool::{avg_pool2d, global_avg_pool, global_max_pool, max_pool2d};
pub use resize::upsample_bilinear_2x;

/// Spatial padding policy of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// No padding; output shrinks by the filter extent.
    Valid,
    /// Zero padding preserving spatial extent (odd filters, stride 1).
    SameZero,
    /// Reflection padding preserving spatial extent.
    SameReflect,
    /// Periodic (circular) padding preserving spatial extent.
    SamePeriodic,
}
