//! Dense matrices, activations, deterministic randomness and the
//! finite-difference gradient checker.

mod activation;
pub mod gradcheck;
mod matrix;
mod rng;

pub use activation::{relu, relu_grad, sigmoid, tanh_act};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{axpy, dot, matmul, DenseMatrix};
pub use rng::Rng;
