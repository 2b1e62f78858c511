//! Benchmark plumbing around the orchestrator: datasets, scoring, the
//! results directory and the command-line front end.

pub mod cli;
pub mod dataset;
pub mod metrics;
pub mod results;

pub use dataset::{load_dataset, parse_dataset, split_visible, DatasetError, SplitError};
pub use metrics::{compute_metrics, Metrics, MetricsError, PairScore, ProblemScores};
pub use results::{ResultsDir, ResultsError};
