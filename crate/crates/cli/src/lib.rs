//! Command-line and HTTP front ends for `cape-core`.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod api;
pub mod cli;
pub mod errors;
pub mod plot;
pub mod report;

pub use cli::run;
