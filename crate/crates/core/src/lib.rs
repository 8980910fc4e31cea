//! Affine privacy amplification for a Shannon cipher system whose key leaks
//! through a noisy side channel.
//!
//! The crate evaluates, at desk scale and exactly where possible, the
//! quantities that govern such a system: minimum-entropy decoding error of
//! affine codes over prime fields, the mutual information leaked to a
//! rate-limited adversary, the bounds controlling that leakage, the error and
//! secrecy exponents, and the one-helper rate region.

// Index loops mirror the summation formulas; `!(x >= y)` comparisons are
// deliberate so that NaN inputs are rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod prob;
pub mod code;
pub mod system;
pub mod optimize;
pub mod exponents;
pub mod region;
pub mod verify;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
