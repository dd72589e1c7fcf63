//! Network primitives with hand-written backward passes.
//!
//! All spatial operations use stride 1 and zero "same" padding, so every
//! primitive maps an `h × w` plane onto an `h × w` plane.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod loss;

pub use activation::{elu, elu_grad, elu_scalar};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm2d, batchnorm2d_eval, batchnorm2d_grad, batchnorm2d_train, BatchNormCache,
    BatchNormGrads, BatchNormParams, Mode, BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{
    conv2d, conv2d_grad, conv_transpose2d, conv_transpose2d_grad, flip_swap_io, ConvGrads,
    ConvParams,
};
pub use loss::mse_loss;
