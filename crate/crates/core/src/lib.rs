//! Numerical laboratory for lattice alloy-type random operators with long-range
//! interactions.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloy;
pub mod charfun;
pub mod disorder;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lattice;
pub mod quad;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
