//! Config-driven orchestration: full runs, the scaling benchmark and the
//! bound checks.

mod bench;
mod bounds;
mod config;
mod run;

pub use bench::{loglog_slope, scaling_benchmark, BenchConfig, BenchReport, BenchRow};
pub use bounds::{verify_bounds, BoundRow, BoundsConfig, BoundsReport};
pub use config::{
    DataSection, DataSource, FileSection, ModelSection, NetworkSection, OutputSection, RunConfig, SeedSection,
};
pub use run::{load_labels, run_pipeline, save_labels, ResultsReport, StageTimings};
