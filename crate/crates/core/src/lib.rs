//! Dual reinforcement learning for unsupervised text style transfer.
//!
//! Two sequence-to-sequence models, `f: X -> Y` and `g: Y -> X`, are
//! warm-started on template pseudo-parallel pairs and then trained jointly:
//! each samples transfers, is rewarded by a frozen style classifier and by how
//! well the opposite model reconstructs the input, and is periodically
//! refreshed by maximum-likelihood updates on back-translated pairs on an
//! annealed schedule.
//!
//! The crate is `no_std` (with `alloc`); the `std` feature, on by default,
//! only switches floating-point and matrix kernels to their `std`-backed
//! implementations.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod corpus;
pub mod numerics;
pub mod seq2seq;
pub mod classifier;
pub mod eval;
pub mod rewards;
pub mod pseudo;
pub mod dualrl;

pub use error::{Error, Result};
