//! Bayesian sequential design for quantile set inversion.
//!
//! Given a black-box function `f(x, s)` with deterministic inputs `x` and
//! uncertain inputs `s ~ P_S`, the goal is to estimate
//!
//! `Γ(f) = { x : P(f(x, S) ∈ C) ≤ α }`
//!
//! from a small number of evaluations. The crate provides:
//!
//! * [`gp`]: Gaussian-process machinery (Matérn kernels, ReML fitting,
//!   kriging prediction, rank-one hypothetical updates).
//! * [`sim`]: conditional path simulation, reconditioning and the two
//!   quantizations used by the criterion (`P_S` and the predictive outcome).
//! * [`criterion`]: the stepwise-uncertainty-reduction criterion for the
//!   quantile set, its Monte Carlo approximation and point selection.
//! * [`baselines`]: random, maximal-misclassification and joint-space SUR
//!   strategies.
//! * [`problems`]: the artificial test functions and an external-process
//!   evaluator.
//! * [`harness`]: designs, prediction grids, the sequential loop, result
//!   files and the configuration format used by the `qsi` binary.

pub mod baselines;
pub mod criterion;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod harness;
pub mod problems;
pub mod rng;
pub mod sim;

pub use error::{QsiError, Result};
pub use geometry::{BoxBounds, Points};
