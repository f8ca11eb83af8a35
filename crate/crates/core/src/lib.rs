// Negated comparisons like `!(x > 0.0)` are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdi;
pub mod coalescent;
pub mod error;
pub mod harness;
pub mod lookdown;
pub mod measures;
pub mod stats;
pub mod streams;
pub mod support;

pub use error::{Error, Result};
