//! Primal-dual solver library for discrete Euclidean k-means and k-median:
//! dual growth, conflict-graph pruning into nested quasi-independent sets,
//! anti-correlated randomized rounding, exact-k assembly, and a numerical
//! certifier for the approximation-ratio constants.

pub mod certifier;
pub mod cli;
pub mod conflict;
pub mod error;
pub mod gen;
pub mod growth;
pub mod invariants;
pub mod model;
pub mod nqis;
pub mod oracles;
pub mod simplex;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    assignment_cost, brute_force_opt, pair_cost, validate_instance, CenterSet, Instance, Objective,
};
