//! Configured experiments: single runs with a paired refined run for the
//! convergence estimate `delta_num`, parameter sweeps, the operator and
//! dilation checks, and an exploratory search for the smallest product.
//!
//! Every run is deterministic for a fixed [`ExperimentConfig`], and reports
//! carry the SHA-256 of the config that produced them.

mod config;
mod lab;
mod output;
mod run;
mod search;
mod sweep;

pub use config::{ExperimentConfig, PotentialSpec, Prepared, SearchBox, StateSpec, Tolerances};
pub use lab::{
    dilation_check, operator_check, spectrum, DilationReport, OperatorReport, CONTRACTION_SLACK,
    DILATION_NORM_TOLERANCE, GENERATOR_TOLERANCE, INTERTWINE_TOLERANCE, MACHINE_RESIDUAL, MAX_IMAGINARY_PART,
    POVM_TOLERANCE, UNDETECTED_TOLERANCE,
};
pub use output::{line_plot_svg, resolve_output_dir, write_experiment, OUTPUT_DIR_ENV};
pub use run::{
    all_pass, run_experiment, run_experiment_full, validity_window, Check, Experiment, RefinedSummary, Relation,
    UncertaintyReport,
};
pub use search::{minimize_product, Evaluation, SearchOutcome, SearchPoint};
pub use sweep::{apply_axis, parse_axis, sweep, SweepAxis, SweepRow, SweepTable, AXIS_NAMES};
