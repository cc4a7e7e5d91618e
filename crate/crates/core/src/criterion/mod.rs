//! The QSI-SUR sampling criterion: estimation of `π_n`, construction of the
//! importance-sampled integration grid, the approximate criterion and the
//! selection step.

mod measure;
mod problem;
mod sampling;
mod sur;
mod tau;

pub use measure::{local_uncertainty, MeasureKind};
pub use problem::QsiProblem;
pub use sampling::{importance_subsample, Subsample};
pub use sur::{
    build_x_grid, select_next_qsi, select_next_qsi_with, CriterionConfig, CriterionContext, QsiSelection,
};
pub use tau::{
    estimate_gamma_cheap, estimate_pi, expected_symdiff_fraction, expected_tau, expected_tau_next, pi_from_ensemble,
    pi_tilde_next, TauEstimate,
};

pub(crate) use sur::argmin;
