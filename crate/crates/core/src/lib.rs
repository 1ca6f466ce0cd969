//! Recovery of an unknown vector from one-bit quantized noisy linear
//! measurements.
//!
//! The crate implements the probit-style measurement model `r = sign(Hx + n - tau)`
//! with per-measurement noise variances, the maximum-likelihood objective and its
//! gradient built on numerically stable Gaussian tail kernels, a fixed-step
//! gradient-ascent solver, and DeepRec: a K-layer unfolded network whose layers
//! generalize one gradient-ascent step, together with a manual-backprop ADAM
//! training loop.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches scalar math to the platform intrinsics.

#![cfg_attr(not(feature = "std"), no_std)]
// Validation guards use `!(x > 0.0)` deliberately: the negation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod gd;
pub mod likelihood;
pub mod linalg;
mod math;
pub mod model;
pub mod net;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
