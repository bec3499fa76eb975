// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod error;
pub mod interval_core;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod tower;
pub mod transfer;

pub use error::{Error, Result};
