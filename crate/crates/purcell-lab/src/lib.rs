//! Driven-cavity simulator for dipole-coupled quantum emitters: classical
//! steady states, linearized quantum fluctuations, Kerr corrections,
//! free-space collective decay and a brute-force master-equation reference.
//!
//! Frequencies are in units of the cavity decay rate and lengths in units of
//! the emitter transition wavelength.

// Negated comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fluctuations;
pub mod freespace;
pub mod greens;
pub mod kerr;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod steadystate;

pub use error::{Error, Result};
