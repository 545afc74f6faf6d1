//! Robust mean estimation under coordinate-level corruption.
//!
//! Samples follow a linear model `x = A z`. Adversaries hide or replace
//! individual entries; the two-step estimators first repair samples using the
//! structure `A` (known, or learned by matrix completion) and then estimate
//! the mean of the repaired data.

pub mod bench;
mod combinatorics;
pub mod corruption;
pub mod datagen;
pub mod error;
pub mod estimators;
mod flow;
pub mod io;
mod linalg;
mod lp;
pub mod metrics;
pub mod recovery;
pub mod structure;

pub use corruption::{AdversaryKind, Budget, CorruptionPlan, Dataset};
pub use error::{Error, Result};
pub use structure::{StructureMatrix, SubspaceBasis};
