//! Drag-tracking guidance for atmospheric entry.
//!
//! A 3-DOF point-mass plant over a spherical, non-rotating planet is flown
//! by a feedback-linearizing bank-angle law that regulates measured drag to
//! a precomputed reference. The drag rate the law needs comes either from
//! the onboard model or from a high-gain observer. `certify` evaluates the
//! Lyapunov-based stability constants for a gain set, and `montecarlo`
//! runs dispersed batches, in parallel when the `parallel` feature is on.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod drag_chain;
pub mod dynamics;
mod error;
pub mod guidance;
pub mod io;
pub mod models;
pub mod montecarlo;
pub mod reference;
pub mod sim;

pub use error::{Error, Result};
