//! Files, configuration, dataset generation and study drivers for the
//! XPCS two-time correlation denoiser. The numerical work lives in
//! [`fcdae_core`]; this crate adds everything that touches the disk.
//!
//! - [`formats`]: `C2F1` maps, `PXS1` pixel series, `.meta` sidecars and
//!   atomic writes.
//! - [`checkpoint`]: versioned `FCDA` model files.
//! - [`config`]: the TOML run configuration.
//! - [`manifest`] and [`dataset`]: synthetic dataset generation and loading.
//! - [`study`]: training, evaluation, fitting, bootstrap and ensemble drivers.
//! - [`svg`]: plain SVG charts for overlays and traces.

pub mod checkpoint;
pub mod config;
pub mod dataset;
mod error;
pub mod formats;
pub mod manifest;
pub mod study;
pub mod svg;

pub use error::{Error, Result};
pub use fcdae_core as core;
