use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::MAX_DIM)]
    TooManyDimensions(usize),
    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not positive definite (eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("invariant density rate eta[{index}] = {value} is not positive")]
    InvalidDensity { index: usize, value: f64 },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scale n = {n} too small: {what} rate is {rate} (minimum admissible n is {min})")]
    ScaleTooSmall { n: u64, min: u64, what: String, rate: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("invalid boundary constants: {0}")]
    Constants(String),
    #[error("invalid lattice parameters: {0}")]
    Params(String),
    #[error("site {0:?} lies outside the truncated lattice")]
    SiteOutside(Vec<i64>),
    #[error("lattice has {states} states, above the cap of {cap}")]
    StateCap { states: u64, cap: u64 },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("site index {0} has total jump rate 0")]
    Absorbing(usize),
    #[error("support mismatch at site {site}: primal rate into it from {from} is {rate} but the dual chain cannot make that jump")]
    SupportMismatch { site: usize, from: usize, rate: f64 },
    #[error("dual chain does not transpose the primal away from the boundary layer at site {site} (dual {dual}, transposed primal {primal})")]
    NotTransposed { site: usize, dual: f64, primal: f64 },
    #[error("chains are built on different lattices")]
    GeometryMismatch,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExactError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("chain is reducible: state {to} is not reachable from state {from}")]
    Reducible { from: usize, to: usize },
    #[error("stationary component {0} is not positive")]
    NonPositiveStationary(usize),
    #[error("stationary solve did not reach the residual target (residual {0:e})")]
    NotConverged(f64),
    #[error("vector length {got} does not match the {expected} states")]
    Length { expected: usize, got: usize },
    #[error("dense exponential is limited to {max} states, got {got}")]
    DenseCap { max: usize, got: usize },
    #[error("linear solve failed: {0}")]
    Linear(#[from] ModelError),
}
