//! Differentiable tensor operations used by the network, each with a
//! matching backward pass.

mod activation;
mod conv;
mod gemm;
mod gradcheck;
mod pool;

pub use activation::{dropout, dropout_backward, relu, relu_backward, softmax, DropoutMask, DropoutMode};
pub use conv::{conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvSpec};
pub use gradcheck::{grad_check, grad_check_op, GradCheckConfig, GradCheckReport};
pub use pool::{avgpool, avgpool_backward, maxpool2, maxpool2_backward, PoolArgmax};
