//! Frequency-dependent slanted beams for analog true-time-delay arrays and a
//! Monte Carlo harness that measures their robustness to user mobility.

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod array;
pub mod config;
pub mod designs;
pub mod error;
pub mod harness;
pub mod jpta;
pub mod link;
pub mod mobility;
pub mod quantile;
pub mod search;

pub use error::{Error, Result};
