//! Monte-Carlo-integration channel model for non-line-of-sight ultraviolet
//! links through a scattering, absorbing and turbulent atmosphere.
//!
//! The crate is organised bottom-up:
//!
//! - [`atmosphere`]: particle and turbulence scattering coefficients and
//!   phase scattering functions.
//! - [`turbulence`]: Rytov variance, log-normal and Gamma-Gamma fading
//!   statistics, fading draws.
//! - [`geometry`]: the transmitter/receiver frame, photon path construction
//!   and the receiver field-of-view test.
//! - [`sampler`]: seeded random streams and the importance-sampling variates.
//! - [`engine`]: per-order received power, turbulent variance and the
//!   distribution of the equivalent fading coefficient.
//!
//! [`special`], [`quadrature`] and [`stats`] hold the numerical support code.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod turbulence;

pub use error::{ChannelError, Result};
