// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod linalg;
mod mle;
pub mod pipeline;
pub mod process_mle;
pub mod seed;
pub mod state_mle;

pub use error::{Error, Result};
