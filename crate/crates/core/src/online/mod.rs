//! Online retraining of the wide part with the deep part frozen, either by
//! centralized gradient descent or by a consensus update in which every
//! agent keeps its own copy of the wide taps.

mod closed_loop;
mod tracking;
mod update;

pub use closed_loop::{
    run_online_phase, write_records_csv, OnlineConfig, OnlineController, OnlineMode, OnlineRecord, OnlineRun,
    RECORD_HEADER,
};
pub use tracking::{
    generate_problem, theorem_suite, verify_tracking_bound, ProblemSpec, TheoremSummary, TrackingProblem,
    TrackingReport,
};
pub use update::{centralized_step, decentralized_step, NodeParamSet};
