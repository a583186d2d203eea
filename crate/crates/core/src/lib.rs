//! Equilibria, linearized stability and direct simulation for size-structured
//! populations whose newborns arrive with a distribution of sizes.

// `!(x > 0.0)` is used on purpose so that NaN lands in the error branch
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod models;
pub mod numerics;
pub mod rates;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
