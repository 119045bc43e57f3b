//! rws: robust weight signatures.
//!
//! A toolkit for checkpoint arithmetic on small neural networks. A signature
//! is the part of a robust model's weight delta that is not explained by the
//! standard model's own training direction; once extracted it can be added
//! onto a standard checkpoint to recover most of the robust model's accuracy
//! under input corruption, at a tiny fraction of the storage of keeping the
//! robust model around.
//!
//! The crate is organized bottom-up:
//! - [`tensor`]: dtypes, flat vectors, deterministic float arithmetic
//! - [`rng`]: counter-based random numbers, named seed derivation
//! - [`checkpoint`]: the on-disk container and its invariants
//! - [`signature`]: extraction (projection residuals) and patching
//! - [`quantizer`]: symmetric integer quantization of signatures
//! - [`trainer`]: a small deterministic trainer that produces the
//!   standard/robust model pairs the rest of the crate operates on
//! - [`analyzer`]: similarity and norm reports, feature-map dumps

pub mod analyzer;
pub mod checkpoint;
pub mod error;
pub mod quantizer;
pub mod rng;
pub mod signature;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
