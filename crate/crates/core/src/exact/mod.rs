//! Exact computations on small truncated lattices: generators, transient
//! and Feynman–Kac semigroups by uniformization, stationary laws and
//! time reversal.

mod dense;
mod generator;
mod stationary;
mod uniformization;

pub use dense::{dense_expm, DENSE_CAP};
pub use generator::{assemble_default, assemble_generator, GeneratorMatrix};
pub use stationary::{reversal_generator, stationary_solve, Distribution, STATIONARY_TOL};
pub use uniformization::{
    duality_check_exact, expectation, fk_potential_apply, fk_semigroup_apply, metzler_apply, poisson_weights,
    transient, PoissonWeights, TAIL,
};
