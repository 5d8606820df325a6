//! Lazy sparse kernel ridge regression.
//!
//! Kernels of the form `φ(d(S(u), S(v)))`, a dense ridge regressor with
//! vector-Jacobian products, a sparse model that solves one small system per
//! neighbourhood on demand, two globally continuous variants, greedy
//! farthest-point selection, optimal-transport losses and trainable readouts.

pub mod continuous;
pub mod datasets;
pub mod dense;
pub mod error;
pub mod kernels;
pub mod learn;
pub mod linalg;
pub mod neighbors;
pub mod par;
pub mod points;
pub mod protocol;
pub mod selection;
pub mod sparse;
pub mod transport;

pub use error::{Error, Result};
pub use points::PointSet;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
