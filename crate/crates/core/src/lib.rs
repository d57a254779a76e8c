//! Higher-order asymptotics for test-time adaptation of batch-normalization
//! statistics.
//!
//! The crate is `no_std` (it needs `alloc` for sample containers) and covers
//! the analytic side of the toolkit:
//!
//! * [`stats`]: samples, plug-in moments, population moments of the
//!   simulation families and the BN affine map.
//! * [`edgeworth`]: the normalized train/test mean gap `T(n, m)` and its
//!   third-order Edgeworth CDF.
//! * [`blending`]: the convex train/test mean blend, its MSE objective and the
//!   optimal weight.
//! * [`risk`]: the terms of the excess-risk bound for the blended BN layer.
//! * [`saddlepoint`]: truncated cubic CGF, saddlepoint density and the
//!   Lugannani-Rice tail.
//! * [`mestimator`]: score functions, the one-step M-estimator update and its
//!   expansion diagnostics.
//!
//! Sampling, Monte Carlo experiments, file formats and the CLI live in the
//! `bnshift` companion crate.
#![no_std]

extern crate alloc;

pub mod blending;
pub mod edgeworth;
mod error;
pub mod mestimator;
pub mod risk;
pub mod saddlepoint;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
