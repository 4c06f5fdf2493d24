//! Synthetic millimeter-wave hand-gesture recognition.
//!
//! The crate follows the signal chain of a TDM-MIMO FMCW gesture radar:
//!
//! - [`sim`] renders raw frames from moving scattering centers,
//! - [`dsp`] recovers per-frame point clouds (range/Doppler FFTs, CA-CFAR,
//!   TDM phase compensation, 2D FFT angle estimation),
//! - [`features`] reduces point clouds to Doppler/azimuth/elevation time
//!   spectra and captures gesture windows with a velocity trigger,
//! - [`cnn`] is a small from-scratch CNN trained with Adam,
//! - [`dataset`] generates, splits and evaluates labeled datasets,
//! - [`pipeline`] glues the per-frame stages into a streaming processor.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cnn;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod features;
mod io_util;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use config::RadarConfig;
pub use error::{Error, FormatError, Result};
