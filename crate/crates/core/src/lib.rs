// NaN-rejecting `!(a > b)` checks and index loops over coupled arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cost;
pub mod error;
pub mod geometry;
pub mod mtw;
pub mod regularity;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
