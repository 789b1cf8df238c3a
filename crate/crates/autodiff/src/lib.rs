//! Dense tensors and a recording tape for reverse-mode differentiation.
//!
//! Model code records a forward pass on a [`Tape`], reading parameters from
//! a [`ParamStore`], then calls [`Tape::backward`] to collect [`Gradients`].

mod error;
pub mod gradcheck;
pub mod kernels;
mod param;
mod tape;
mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, relative_error, GradCheckReport, Selection, Stencil};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{sigmoid, softmax_in_place, Tape, Var};
pub use tensor::Tensor;
