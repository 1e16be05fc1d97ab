//! Sequential editing of linear associative memories.
//!
//! A memory `W` (p×q, p < q) stores key-value pairs with `W k_i = v_i`.
//! Edits add rank-one updates one after another; the crate measures how the
//! accumulated update perturbs the stored associations (condition numbers,
//! pseudo-inverse and key-drift bounds) and restrains the large singular
//! values of the update sum.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod editor;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod memory;
pub mod metrics;
pub mod perturbation;
pub mod prune;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Matrix;
