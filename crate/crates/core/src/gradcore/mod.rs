//! Dense tensors, a flat parameter vector with a named layout, the handful
//! of layers the reconstruction network needs (3x3 conv, ReLU, MSE), plain
//! SGD and a finite-difference gradient checker.

mod conv;
mod gradcheck;
mod loss;
mod mlp;
mod params;
mod sgd;
mod tensor;

pub use conv::{
    conv2d_backward, conv2d_backward_raw, conv2d_forward, conv2d_forward_raw, relu_backward, relu_backward_in_place,
    relu_forward, relu_in_place, ConvGrads, ConvShape,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use loss::{mse_loss, mse_loss_raw};
pub use mlp::{Activation, Mlp, MlpCache};
pub use params::{Layout, ParamVector, Segment};
pub use sgd::{sgd_step, sgd_step_in_place};
pub use tensor::Tensor;
