//! Randomized Mirror-Prox for minimizing the maximal eigenvalue of a convex
//! combination of sparse symmetric matrices.

// NaN-rejecting argument checks read as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod oracle;
pub mod prox;
pub mod rng;
pub mod solvers;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
