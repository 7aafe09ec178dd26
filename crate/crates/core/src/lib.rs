//! Recurrent sequence models with exponential and polynomial memory decay.
//!
//! Leaky, gated and GRU cells share one parameter type ([`cells::CellParams`]);
//! a non-zero `rate_r` replaces the linear decay term `h` by `|h|^r h`.
//! [`bptt`] runs exact backpropagation through time and exposes per-step
//! input-gradient norms, [`diagnostics`] fits those profiles, [`ode`] holds
//! the continuous-time closed forms, and [`training`] / [`data`] provide a
//! small training harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bptt;
pub mod cells;
pub mod data;
pub mod diagnostics;
mod error;
pub mod head;
pub mod math;
pub mod ode;
pub mod training;

pub use error::{Error, Result};
pub use math::{Matrix, Vector};
