// `!(x > 0.0)` guards reject NaN on purpose; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod fields;
pub mod inequalities;
pub mod matkit;
pub mod measures;
pub mod quadrature;
pub mod weakcalc;

pub use error::{Error, Result};
