//! Compressive sampling and recovery of pulse streams.
//!
//! A pulse stream is a sparse spike stream circularly convolved with an
//! unknown concentrated pulse shape. This crate provides the signal model,
//! circulant linear operators, Gaussian measurement operators, the
//! separation-constrained best-approximation solver, and the recovery
//! algorithms (exhaustive alternating minimization, iterative support
//! estimation, CoSaMP-family baselines, and anchor-pulse analysis).

pub mod error;
pub mod io;
pub mod linop;
pub mod model_approx;
pub mod recovery;
pub mod sampling;
pub mod signal_model;

pub use error::{Error, Result};
