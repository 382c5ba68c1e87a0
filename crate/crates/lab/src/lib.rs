//! Ensembles, verification suites, configuration and report output on top
//! of `rbm-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod ensemble;
pub mod error;
pub mod report;
pub mod run;
pub mod verify;
