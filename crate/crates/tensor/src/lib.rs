//! Dense `f64` tensors, a reverse-mode autodiff tape and the Adam optimizer.
//!
//! Everything is row-major and double precision. Operations are recorded
//! eagerly on a [`Tape`]; a scalar root can be differentiated with
//! [`Tape::backward`]. Parameters travel as named [`ParamSet`]s so that
//! optimizers and checkpoints can address them by name.

pub mod adam;
mod error;
pub mod grad;
pub mod kernels;
mod params;
mod spectrum;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{Result, TensorError};
pub use grad::{evaluate_with_gradients, grad_check, GradCheckReport};
pub use params::ParamSet;
pub use spectrum::ComplexSpectrum;
pub use tape::{Bound, Gradients, Tape, Var};
pub use tensor::Tensor;
