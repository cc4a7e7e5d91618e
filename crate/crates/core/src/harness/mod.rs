//! Experiment orchestration: designs, prediction grids, the sequential loop
//! and result files.

mod config;
mod design;
mod grid;
mod results;
mod run;
mod sobol;

pub use config::{CustomProblem, RunConfig, Strategy};
pub use design::{latin_hypercube, make_initial_design, maximin_lhs, min_distance};
pub use grid::{make_prediction_grid, misclassified_proportion, truth_membership, PredictionGrid};
pub use results::{
    append_record, nearest_rank, read_records, record_header, summarize, write_records, write_summary, RunRecord,
    SummaryRow,
};
pub use run::{report, run_experiment, run_experiment_on, run_experiment_until, ExperimentOutcome};
pub use sobol::{Sobol, SOBOL_MAX_DIM};
