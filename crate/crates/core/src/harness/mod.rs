//! Synthetic experiments: configuration, case generation and trial running.

pub mod generate;
pub mod runner;
pub mod spec;

pub use generate::{base_shape, generate_case, Case};
pub use runner::{
    run_algorithm, run_best_of, run_experiment, strip_columns, AlgorithmRun, AlgorithmSummary, ExperimentReport,
    TraceRow, TrialRecord, TIMING_COLUMNS,
};
pub use spec::{Algorithm, BoundsCenter, ExperimentSpec, InitMode, ShapeSource};
