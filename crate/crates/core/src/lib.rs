//! Block-level interference-exploitation precoding for PSK downlinks.
//!
//! One precoder per block of `N` slots is chosen to maximize the smallest
//! symbol-scaling CI margin across all users and slots. The problem is solved
//! through its dual, a convex QP over the probability simplex, and the
//! precoder is recovered in closed form.

// `!(x > 0.0)` is used throughout so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod sim;
pub mod simplex_qp;
#[cfg(any(test, feature = "validation"))]
pub mod validation;

pub use error::{CiError, Result};
