//! Experiment harness: configuration, seeded runs, event logs, metric
//! exports, cross-run comparison and plots.

pub mod compare;
pub mod config;
pub mod log;
pub mod report;
pub mod run;
pub mod tracker;

pub use compare::{compare, compare_dirs, Comparison, PairRow};
pub use config::{BonusKind, CurriculumParams, EnvironmentRef, Facet, RewardBonus, RunConfig, OUTPUT_ROOT_ENV};
pub use log::{read_event_log, EventLogWriter, LogEvent, LogLine, SCHEMA_VERSION};
pub use report::{report, report_dir, svg_plot};
pub use run::{
    default_output_root, load_summary, read_metrics_csv, replay, run, run_in_memory, run_into, run_many,
    RunRecord, RunSummary,
};
pub use tracker::{window_mutual_information, EpisodeOutcome, MetricsTracker, EPISODE_WINDOW};
