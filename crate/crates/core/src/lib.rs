//! Photon-correlation kernel for single-photon emitters and their clusters.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! - [`model`]: closed-form photon statistics (pair correlation, gate-integrated
//!   bunching parameter, cluster mixing, loss channel, factorial moments and the
//!   nonclassicality tests built on them).
//! - [`sim`]: a seeded Monte Carlo generator of gated camera frame stacks.
//! - [`estimators`]: streaming estimators over frame stacks.
//! - [`classifier`]: emitter-count inference from brightness and correlation.
//!
//! File formats, configuration files, parallel drivers and the command-line
//! tool live in the `photocorr` crate.
#![no_std]
// `!(x > 0.0)` also rejects NaN, which is the point of most such checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod error;
pub mod estimators;
mod math;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
