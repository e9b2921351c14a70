//! Dense 2-D tensors with reverse-mode gradients, parameter storage,
//! finite-difference checking and plain gradient descent.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_inputs};
pub use params::{sgd_step, BoundParams, ParamStore};
pub use tape::{Axis, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("expected a scalar, got shape {0:?}")]
    NonScalar([usize; 2]),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("{0}")]
    Contract(String),
}

#[cfg(test)]
mod tests;
