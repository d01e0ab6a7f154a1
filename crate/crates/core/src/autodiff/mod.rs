//! Reverse-mode differentiation over dense `f64` matrices.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    gradient_check, gradient_check_with_fault, relative_error, GradCheck, DEFAULT_EPS,
};
pub use tape::{
    hardswish, hardswish_grad, sigmoid, Activation, Elementwise, Fault, Mode, Reduction, Tape, Var,
};
pub use tensor::Tensor;
