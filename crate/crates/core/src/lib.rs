//! Crossover designs that stay efficient when subjects drop out.
//!
//! The crate computes the expected-information surrogate for a random
//! dropout mechanism, the minimax certificate `(x*, y*, support)` that
//! characterizes universally optimal approximate designs, the linear
//! optimality system used to search for exact designs, and the expected
//! criterion values used to evaluate any design.

pub mod design;
pub mod dropout;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod information;
pub mod io;
pub mod linalg;
pub mod qsolver;
pub mod search;
pub mod sequence;

pub use dropout::{type_h_identity_check, DropoutMechanism, MechanismMatrices, MechanismSpec};
pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use sequence::{enumerate_sequences, PrefixStats, SymmetricBlock, TreatmentSequence};
