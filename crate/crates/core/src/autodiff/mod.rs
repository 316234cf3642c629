//! A small reverse-mode differentiation engine with exactly the operators
//! the network needs: 2-D convolution, batch norm, 2x2 max pooling, ReLU,
//! sigmoid, global pooling and binary cross-entropy, plus Adam.

mod adam;
mod gradcheck;
mod norm;
mod scalar;
mod suite;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_at};
pub use norm::{BatchNormState, BN_EPS, BN_MOMENTUM};
pub use scalar::Scalar;
pub use suite::operator_grad_checks;
pub use tape::{Activation, Mode, Pooling, Tape, Var, BCE_CLAMP};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
