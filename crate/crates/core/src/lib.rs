//! Dark-state emission, relaxation and noise models for two lattices of
//! two-level atoms coupled to one cavity mode.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod error;
pub mod fit;
pub mod hilbert;
pub mod liouville;
pub mod noise;
pub mod signal;
pub mod sse;
pub mod states;

pub use error::{Error, Result};
pub use hilbert::{CouplingConfig, QuantumState};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
