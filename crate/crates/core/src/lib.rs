//! Numerical core for denoising XPCS two-time correlation maps.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std`; file formats, configuration and the command line
//! live in the companion `fcdae` crate.
//!
//! Module map:
//!
//! - [`tensor`] and [`nn`]: dense NCHW tensors, same-padded convolutions,
//!   batch normalization, ELU, MSE and Adam, each with exact gradients.
//! - [`model`]: the fully convolutional denoising autoencoder, its training
//!   loop, seed ensembles and the standardize/forward/destandardize flow.
//! - [`c2`]: two-time correlation construction, one-time extraction and the
//!   preprocessing/augmentation transforms.
//! - [`synth`]: parametric ground truth and Gaussian speckle simulation.
//! - [`metrics`]: reliability metrics (contrast, residual ACF, SSIM, SNR,
//!   ensemble variance).
//! - [`fit`]: Levenberg-Marquardt fitting of KWW and composite models.
#![no_std]
// Float math comes from num_traits (libm) unless std ends up in the crate
// graph, in which case the inherent methods win and the imports go unused.
#![allow(unused_imports)]
// `!(x > 0.0)` is how NaN gets rejected together with the range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod c2;
mod error;
pub mod fit;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod stats;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor4;
