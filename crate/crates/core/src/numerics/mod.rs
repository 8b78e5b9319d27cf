//! Dense f64 tensors and a reverse-mode differentiation tape.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod op_tests;
