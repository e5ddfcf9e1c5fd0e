//! Certified robustness by randomized smoothing.
//!
//! A smoothed classifier predicts the class that a base classifier returns
//! most often under Gaussian input noise, and comes with an L2 radius inside
//! which that prediction cannot change. This crate certifies such radii two
//! ways:
//!
//! * [`smoothing::certify_mc`] samples `N` noisy copies of the input and
//!   bounds the top-class probability with a Clopper-Pearson interval.
//! * [`surrogate::accelerated_certify`] replaces the `N`-sample pass with one
//!   forward pass of a network trained to predict normalized class counts.
//!
//! [`evaluation`] compares the two (certified accuracy, ACR, radius error,
//! sampling variance, latency) and [`cli`] drives the whole pipeline from
//! the `certsmooth` binary.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod smoothing;
pub mod surrogate;

pub use error::{Error, Result};
