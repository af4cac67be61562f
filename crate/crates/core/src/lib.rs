#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod impairments;
pub mod linalg;
pub mod objective;
pub mod optimizers;
pub mod par;
pub mod rates;
pub mod records;
pub mod rng;
pub mod sensing;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
