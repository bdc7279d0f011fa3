//! Scenario generation, ground truth, batch evaluation and reports.

pub mod ground_truth;
pub mod report;
pub mod scenario;
pub mod svg;

pub use ground_truth::{ground_truth_collision, GroundTruth};
pub use report::{
    coverage_stats, run_benchmark, thread_count, BenchConfig, BenchmarkReport, CoverageStats, ModeReport, Stats,
    TrialOutcome, CSV_HEADER, CSV_SCHEMA_VERSION, REPORT_SCHEMA_VERSION, THREADS_ENV,
};
pub use scenario::{gen_scenario, gen_scenarios, reach_shell, Scenario, CUBE_HALF_WIDTH};
