//! Deep Koopman embeddings with control.
//!
//! The crate learns lifted linear models `z' = A z + B û` of nonlinear
//! systems, where the lifted state concatenates the physical state with a
//! learned encoding and `û` is a (possibly state-dependent) encoding of the
//! control. It ships the ground-truth environments, dataset tooling, least
//! squares and neural baselines, lifted-space LQR, and the benchmark suites
//! built on top of them.

mod binio;
pub mod baselines;
pub mod cli;
pub mod control;
pub mod datagen;
pub mod diffcore;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod koopman;
pub mod modelfile;
pub mod seed;

pub use error::{Error, Result};
