//! The fully convolutional denoising autoencoder.
//!
//! The encoder is a chain of same-padded convolutions whose output channel
//! counts are `encoder_channels`; the decoder mirrors it with transposed
//! convolutions back down to the input channel count. For the default
//! `[1, 4, 8, 16, 32]` that is
//!
//! ```text
//! conv       1->1, 1->4, 4->8, 8->16, 16->32   each + batchnorm + ELU
//! transposed 32->16, 16->8, 8->4, 4->1         each + batchnorm + ELU
//! transposed 1->1                              linear output
//! ```
//!
//! No layer changes the spatial size, so any `n × n` map goes in and an
//! `n × n` map comes out.

mod denoise;
mod network;
mod train;

pub use denoise::{denoise, TrainingPair};
pub use network::{build_model, FcDaeArchitecture, FcDaeModel, Layer, LayerKind, LayerSpec, Tape};
pub use train::{train, train_ensemble, train_with_progress, TrainConfig, TrainReport};
