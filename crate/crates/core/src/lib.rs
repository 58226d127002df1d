//! Convex upper bounds for the maximum-entropy sampling problem (MESP):
//! choose `s` of `n` jointly Gaussian variables with covariance `C` so that
//! `ldet C[S,S]` is maximal.
//!
//! The crate provides
//! - the linx, BQP, complementary BQP, NLP and complementary NLP bounds,
//! - mixed bounds that combine a relaxation with its complement (or with a
//!   different relaxation via Lagrangian decomposition),
//! - Newton / interior-point tuning of the mixing weight and scaling
//!   parameters, and
//! - an exact best-first branch-and-bound solver built on any of them.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod barrier;
pub mod bnb;
pub mod bound;
pub mod bqp;
pub mod cli;
pub mod error;
pub mod instance;
pub mod linalg;
pub mod linx;
pub mod mixer;
pub mod nlp;
pub mod report;
pub mod tuner;

pub use error::{MespError, Result};
pub use instance::{CovarianceInstance, SubsetSelection};
pub use linalg::SymMatrix;
pub use report::{BoundReport, Flag, MixParams};
