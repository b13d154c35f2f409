//! Pipeline orchestration, reporting, and export for the crimegraph CLI.
//! The binary in `main.rs` is a thin argument layer over these modules, so
//! integration tests can drive the full pipeline in-process.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod report;

pub use config::{apply_config_file, GraphFormat, PipelineConfig, SimilarityVariant};
pub use export::export_geojson;
pub use pipeline::{run_pipeline, PipelineSummary};
pub use report::render_report;
