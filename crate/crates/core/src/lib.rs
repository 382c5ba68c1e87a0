//! Lattice Markov-chain approximations of reflected Brownian motion in the
//! nonnegative orthant, the dual chain with its Feynman–Kac reweighting, and
//! exact small-lattice computations used to check them.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod exact;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod num;
pub mod simulate;

/// Largest supported orthant dimension.
pub const MAX_DIM: usize = 8;

pub use error::{ExactError, LatticeError, ModelError, SimError};
pub use lattice::{
    build_chain, build_dual_chain, min_scale, BoundaryConstants, ChainKind, ChainSpec, CompiledChain, Direction,
    LatticeParams, RateTable, SiteClass,
};
pub use linalg::Matrix;
pub use model::{
    dual_reflection, skew_check, sym_sqrt, validate_assumption, DualData, InvariantDensity, RbmSpec, ValidationReport,
};
