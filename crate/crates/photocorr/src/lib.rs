//! File formats, configuration, parallel drivers and the command-line
//! front end for the photon-correlation toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod parallel;
pub mod store;
pub mod table;

pub use error::{Error, ErrorClass, Result};
