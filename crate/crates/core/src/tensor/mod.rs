//! Dense tensors, the autodiff tape, and the differentiable ops LadderNet is built from.

mod autograd;
mod dense;
pub mod gradcheck;
pub mod ops;
mod real;

pub use autograd::{Gradients, Tape, Var};
pub use dense::Tensor;
pub use real::{matmul, Real};

/// Whether layers use batch statistics and dropout (train) or running statistics and identity (eval).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
