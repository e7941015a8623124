//! Numerical laboratory for random walks in a random branching potential
//! with a random trapping landscape.
//!
//! The model is the lattice Cauchy problem
//!
//! ```text
//! du/dt = (Delta sigma^-1 + xi) u,   u(0, .) = 1_{0},
//! ```
//!
//! where `xi` is an i.i.d. Weibull-tailed potential driving exponential
//! growth and `sigma` is an i.i.d. trapping landscape (bounded below) slowing
//! the walk. The crate provides:
//!
//! - seeded, box-independent generation of the random fields ([`env`]);
//! - the deterministic scale, radius and exponent formulas ([`scales`]);
//! - matrix-free Hamiltonians with principal-eigenpair solvers and local /
//!   masked / punctured eigenvalues ([`operator`]), plus path expansions and
//!   exit functionals ([`pathexp`]);
//! - renormalised time evolution, spectral solutions and a Feynman-Kac
//!   Monte Carlo oracle ([`solver`]);
//! - the localisation-site predictor: penalisation functionals, top-two
//!   statistics, ageing times ([`predictor`]);
//! - percolation diagnostics: chemical distances, closed *-cluster
//!   statistics, coarse-graining scales ([`perc`]);
//! - experiment campaigns with config, reports and statistical tests
//!   ([`harness`], [`stats`]).
//!
//! Batch work (field generation, Monte Carlo walkers, seed sweeps) runs on
//! rayon when the default `parallel` feature is enabled and falls back to
//! sequential loops without it; results are identical either way.

pub mod env;
pub mod harness;
pub mod lattice;
pub mod operator;
pub mod parallel;
pub mod pathexp;
pub mod perc;
pub mod predictor;
pub mod rng;
pub mod scales;
pub mod solver;
pub mod stats;

pub use env::{Environment, PotentialParams, TrapFamily, TrapParams};
pub use lattice::{BoxSpec, Site};
pub use operator::{DomainOperator, EigenPair};
pub use scales::{ExponentSet, RadiusSet, ScaleSet};
pub use solver::{EvolveControls, SolutionState};
