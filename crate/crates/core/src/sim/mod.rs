//! Conditional simulation on finite grids and the quantizations used by the
//! criterion approximation.

mod paths;
mod quantize;

pub use paths::{recondition_paths, simulate_paths, GridPosterior, PathEnsemble, ReconditionStatus};
pub use quantize::{gh_quantize, quantize_s, GridPair, OutcomeQuantization, SGrid, GRID_SIZE_LIMIT};
