//! Monte Carlo harness, experiment drivers, plain-text file formats and the
//! command-line front end for [`bnshift_core`].

pub mod cli;
pub mod config;
mod error;
pub mod experiments;
pub mod harness;
pub mod rng;
pub mod sampling;
pub mod table;

pub use error::{Error, Result};
