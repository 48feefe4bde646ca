//! Hand-differentiated layer library. Every forward has a matching backward
//! written out by hand; [`gradcheck`] holds the finite-difference oracle used
//! to verify them.

pub mod gradcheck;
pub mod layers;
pub mod lstm;
pub mod optim;
mod tensor;

pub use gradcheck::{gradient_check, gradient_check_with_floor, GradCheckReport};
pub use layers::{
    conv1d_backward, conv1d_forward, cross_entropy, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool1d_backward, maxpool1d_forward, relu, relu_backward, softmax,
    ClassTarget, DropoutSpec, PoolOutput,
};
pub use lstm::{lstm_cell, lstm_forward, LstmCache, LstmGrads, LstmParams, LstmState};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::Tensor;
