//! Experiment orchestration: declarative configs, multi-seed runs with a
//! strict search/report split, sweeps, and report files.
//!
//! The search phase sees only a label-stripped graph. Labels are held in
//! [`PreparedData::labels`] and read by [`report_phase`] alone.

pub mod config;
pub mod report;
pub mod run;
pub mod studies;

pub use config::{DatasetSource, ExperimentConfig, InjectionConfig, SearchMode};
pub use report::{render_summary, write_outputs};
pub use run::{
    prepare_dataset, report_phase, run_experiment, run_prepared, search_phase, Aggregate,
    ExperimentResult, Phase, PhaseObserver, PreparedData, SeedResult, Silent,
};
pub use studies::{
    cross_detector_study, granularity_sweep, k_sensitivity, CrossRow, CrossStudy, GranularityRow,
    KSensitivityRow,
};
