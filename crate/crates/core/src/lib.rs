//! Collaborative hashing for recommendation.
//!
//! Users and items are represented by relaxed real-valued factors in
//! `[-1, 1]^K` that are trained so that the Hamming similarity of their
//! binarized codes tracks the observed rating. After training, factors are
//! rounded against per-coordinate medians into balanced `K`-bit codes, and
//! recommendations are served from Hamming space.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the pure parts:
//!
//! - [`model`]: objective, gradients, SGD step, projection, median rounding
//!   and the matrix-factorization baseline.
//! - [`code`]: packed binary codes and code sets.
//! - [`retrieval`]: radius search, hash-table lookup, Hamming ranking,
//!   multi-index hashing and the real-valued ranking baseline.
//! - [`metrics`]: Precision@k and DCG@k.
//! - [`split`]: seeded train/test splitting.
#![no_std]
#![warn(missing_docs)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod code;
mod error;
pub mod metrics;
pub mod model;
pub mod retrieval;
pub mod split;

pub use code::{hamming_distance, similarity, CodeSet, HashCode};
pub use error::{Error, Result};
pub use model::{
    Dataset, EntityKind, FactorMatrices, FactorVector, FactorView, Hyperparams, Objective,
    RatingScale, RatingTriple,
};
