// Validation uses `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod cli;
pub mod error;
pub mod inequalities;
pub mod meanfns;
pub mod multimeans;
pub mod psd;

pub use error::{Error, Result};
