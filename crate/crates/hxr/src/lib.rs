//! IO, transport and command-line layer over `hxr-core`.

// Negated comparisons double as NaN checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod client;
pub mod commands;
pub mod config;
pub mod conformance;
pub mod error;
pub mod json;
pub mod protocol;
pub mod server;
pub mod shots;

pub use error::{Error, Result};
