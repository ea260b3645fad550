//! Dense tensors, reverse-mode autodiff and the layers built on them.

mod array;
mod conv;
pub mod gradcheck;
mod graph;
pub mod nn;
mod norm;
pub mod ops;
pub mod optim;
mod real;

pub use array::Tensor;
pub use graph::{no_grad, BackwardFn, Var};
pub use real::{gemm, Real};
