//! The experiment driver: a TOML-configured, resumable sequence of stages
//! writing plain-text artifacts into one run directory.
//!
//! ```text
//! gen-data -> train-matcher -> train-ce -> train-scst -> caption -> analyze -> probe -> report
//! ```
//!
//! A stage is skipped when all of its artifacts exist; once one stage runs,
//! every later stage runs too.

mod config;
mod paths;
mod report;
mod stages;

pub use config::{AnalysisConfig, CaptionerConfig, ExperimentConfig, ProbeConfig};
pub use paths::RunPaths;
pub use report::matched_template;
pub use stages::{
    emit_report, run_pipeline, AnalysisSummary, CaptionAnalysis, CaptionRecord, CeSummary, Run, RunSummary, ScstSummary,
    StageName,
};
