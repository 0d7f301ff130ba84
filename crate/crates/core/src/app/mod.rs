//! Configuration, orchestration and report emission.

pub mod benchmarks;
pub mod config;
pub mod pipeline;
pub mod report;

pub use benchmarks::Benchmark;
pub use config::{parse_config, parse_config_file, ConfigDocument, RunConfig};
pub use pipeline::{run_pipeline, RunReport, Verdict};
pub use report::write_reports;
