//! Batch analysis of landmark datasets driven by a config file.
//!
//! Stages run in order: centering, Gram matrices, sample moments, moment
//! estimates, mean-form reconstruction, flip-flop, pairwise bootstrap tests
//! and model selection. A failing stage is recorded in the report and the
//! remaining stages run on whatever completed.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod output;

pub use analysis::{
    correlation, load_references, run_analysis, run_analysis_on, AnalysisReport, FlipFlopSummary, GroupAnalysis,
    PairComparison, StageError,
};
pub use config::{AnalysisConfig, BootstrapConfig, FlipFlopConfig, OutputConfig, OutputFormat, SelectionConfig};
pub use dataset::{load_dataset, parse_csv, parse_json, to_csv, to_json, DataFormat, LandmarkSample};
pub use output::{emit_report, emit_report_to, report_json};

/// JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");
