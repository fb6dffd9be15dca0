//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each primitive as it is evaluated. Calling
//! [`Tape::backward`] on a scalar walks the record in reverse and leaves
//! gradients for every node that depends on a [`Tape::param`] leaf.
//!
//! Non-differentiable kinks (`clamp_min`, `maximum`) use a zero subgradient
//! at the boundary.

mod broadcast;
mod gradcheck;
pub(crate) mod matmul;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, relative_error, GradCheckReport};
pub use tape::{sigmoid, RowMix, Tape, Var, DIV_EPS};
pub use tensor::Tensor;
