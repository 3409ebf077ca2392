//! Orchestration: configuration, stage execution, persistence, manifests.
//!
//! A pipeline run is `gen -> split -> sft -> mine -> rm -> grpo -> eval`,
//! with every stage reading and writing files under one output directory and
//! recording input/output digests in `manifest.json`. All stage seeds derive
//! from the single `master_seed`, so two runs with the same configuration
//! produce byte-identical artifacts (the manifest's wall-clock fields aside).

mod config;
mod manifest;
mod stages;

pub use config::{EvalConfig, MiningConfig, PipelineConfig, ScorerArchConfig};
pub use manifest::{RunManifest, StageEntry};
pub use stages::{run_pipeline, run_stage, EvalSpec, ReportFile, SplitManifest, Stage};
