//! First-passage times and ranked excursion heights of skew Brownian motion.
//!
//! The analytic side evaluates passage-time densities and distribution
//! functions through rapidly converging series and one-dimensional
//! convolutions. The [`montecarlo`] module simulates the same quantities from
//! first principles so the two can be compared.

// `!(x > 0.0)` is how NaN gets rejected along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod excursion_law;
pub mod first_passage;
pub mod kernels;
pub mod montecarlo;
pub mod quadrature;
pub mod sum;
pub mod validation;

pub use error::{Error, Result};
pub use excursion_law::SkewParam;
