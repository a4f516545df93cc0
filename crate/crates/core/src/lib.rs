// Index loops read closer to the formulas; negated float comparisons are
// deliberate so that NaN fails a check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod infometrics;
pub mod policy;
pub mod quantum;
pub mod theorem_lab;
pub mod trainer;

pub use error::{Error, Result};
