//! Nested Bregman iterations for splitting signals and images into
//! structurally different components under a linear forward operator.
//!
//! The crate is organized bottom-up:
//!
//! * [`fields`]: grids, finite differences, forward operators, file formats;
//! * [`regularizers`]: the convex penalties and their splitting structures;
//! * [`solvers`]: a preconditioned primal-dual solver with Tikhonov and
//!   Morozov (constrained) front ends;
//! * [`bregman`]: classical Bregman iterations with discrepancy stopping;
//! * [`nested`]: the nested Bregman drivers (noise-free, Morozov inner
//!   step, discrepancy-stopped inner Bregman loops);
//! * [`diagnostics`]: PSNR, normalized cross-correlation and stopping rules;
//! * [`experiments`]: synthetic ground truths, noise, run configuration and
//!   output writers.

pub mod bregman;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fields;
pub(crate) mod linalg;
pub mod nested;
pub mod regularizers;
pub mod solvers;

pub use error::{Error, Result};
pub use fields::{Field, ForwardOperator, Grid, TensorField, VectorField};
pub use regularizers::Regularizer;
pub use solvers::{DecompositionProblem, SolveResult, SolverConfig};
