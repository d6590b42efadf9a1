//! N-1 robustness harness for AC power flow surrogates.
//!
//! The crate bundles a Newton-Raphson power flow oracle, the scenario
//! generators used to build N and N-1 datasets, a residual feed-forward
//! surrogate trained with Adam, and the evaluation routines that measure how
//! much the surrogate degrades when a line is cut.

// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod grid;
mod lu;
pub mod matpower;
pub mod par;
pub mod powerflow;
pub mod scenario;
pub mod surrogate;

pub use error::{Error, Result};
pub use lu::{DenseMatrix, PIVOT_THRESHOLD};
