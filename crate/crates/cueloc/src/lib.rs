//! One-shot localization of novel objects specified by a visual cue.
//!
//! A weight-sharing fully convolutional tower is applied to an adaptation
//! image (object of interest highlighted by a cue) and to a target image.
//! Spatial attention pools the cue feature vector out of the adaptation
//! feature map, the pooled vector is multiplied into the target feature map,
//! bottleneck layers turn the product into similarity score maps, and a
//! softargmax plus linear head reads out the predicted position.
//!
//! The crate is organized as:
//!
//! - [`autograd`]: dense tensors on a reverse-mode tape with exactly the
//!   primitives the localizer needs, plus Adam and a finite-difference
//!   gradient checker.
//! - [`model`]: the localizer assembly (tower, attention head, combine and
//!   score, softargmax, linear head) over named parameter sets.
//! - [`scene`]: deterministic synthetic episode generation for the glyph and
//!   colored-shape protocols, cue rendering, and the episode archive format.
//! - [`train`]: training loop, evaluation metrics, checkpoint container.
//! - [`eval`]: named experiments, the geometric pick-and-place mock, and PNG
//!   visualization of attention and score maps.
//!
//! Everything is deterministic given a seed. Batch gradients and episode
//! evaluation fan out over worker threads when the `parallel` feature is
//! enabled, with reductions in episode order so the numbers are identical to
//! the sequential path.

pub mod autograd;
pub mod error;
pub mod eval;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod scene;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};

/// Scalar type for all tensor math. `f64` by default; the `f32` feature
/// switches it for training-speed experiments.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

/// Number of bits in [`Real`], recorded in checkpoints.
pub const REAL_BITS: u32 = (std::mem::size_of::<Real>() * 8) as u32;
