//! Group SLOPE regression with doubly dynamic safe screening.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] reads LIBSVM files, synthesises feature groups by column
//!   duplication and builds OSCAR regularization sequences;
//! * [`decouple`] orthogonalises every group block so that group effects
//!   become plain block norms of the decoupled coefficients;
//! * [`sorted_l1`] evaluates the sorted-ℓ1 penalty and its proximal operators;
//! * [`duality`] builds dual-feasible points and duality gaps;
//! * [`screening`] is the safe screening engine;
//! * [`solvers`] holds the accelerated (APGD) and variance-reduced stochastic
//!   (SPGD) proximal solvers, both with an optional screening hook;
//! * [`bench`] drives runtime and screening-rate experiments.

pub mod bench;
pub mod data;
pub mod decouple;
pub mod duality;
pub mod error;
pub mod screening;
pub mod solvers;
pub mod sorted_l1;

pub use data::{Dataset, GroupPartition, GroupedDesign, GroupedProblem, LambdaSequence};
pub use decouple::{DecoupledProblem, GroupFactor};
pub use duality::{DualState, GapCertificate};
pub use error::{GslopeError, Result};
pub use screening::{ActiveSet, ScreeningTrace};
pub use solvers::{SolverConfig, SolverRun};
