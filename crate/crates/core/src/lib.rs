//! Simulation and verification toolkit for coupled Brownian webs.
//!
//! The crate covers three layers:
//!
//! * [`lattice`]: the discrete arrow model, its resampling dynamics, and the
//!   exactly computable discrete flow of kernels.
//! * [`paths`] and [`npoint`]: continuous samplers for coalescing,
//!   switching, and sticky (theta-coupled) Brownian pairs, plus the N-point
//!   motion of the erosion flow built by high-frequency switching.
//! * [`analytics`], [`generator`] and [`stats`]: closed forms, the
//!   piecewise-linear generator of the N-point martingale problem, and the
//!   estimators and tests that turn the characterizations into checks.

pub mod analytics;
pub mod error;
pub mod generator;
pub mod lattice;
pub mod npoint;
pub mod paths;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
