//! Numerical core for forecasting hard-X-ray (hot-electron) emission from
//! laser intensity profiles with reservoir computers.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Everything
//! that touches files, sockets or the command line lives in the `hxr`
//! companion crate.
//!
//! ```text
//! laser ─► normalize ─► window_patch ─► temporal encoder ─┐
//!                                                         ├─► fuse ─► conv/BN/GELU ─► reservoir ─► post head ─► HXR
//!           context terms ─► spatial cross-attention ─────┘                              │
//!                                                                   entropies ───────────┴─► confidence scanner
//! ```
//!
//! Three reservoirs are available: a leaky echo-state network, a polynomial
//! delay-tap (NGRC-style) map, and a remote hidden-state service reached
//! through [`service::ReservoirService`]. [`mock::MockReservoir`] implements
//! that service in-process.

#![no_std]
#![warn(missing_debug_implementations)]
// Negated comparisons double as NaN checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod confidence;
pub mod data;
pub mod error;
pub mod head;
pub mod metrics;
pub mod mock;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod prompt;
pub mod reservoir;
pub mod sdc;
pub mod service;
pub mod tensor;

pub use error::{Error, Result};
