//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The op set is exactly what the localizer needs: valid cross-correlation,
//! ReLU, 3x3 neighborhood stacking, spatial softmax, attention pooling,
//! channel broadcast multiply, softargmax, a linear layer and MSE loss.
//! Forward applications are recorded on a [`Tape`]; [`Tape::backward`]
//! replays them once in reverse and accumulates gradients for every leaf.

mod adam;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use tape::{Gradients, Tape, ValId};
pub use tensor::Tensor;
