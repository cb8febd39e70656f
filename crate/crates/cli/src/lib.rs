//! Command layer over the uplift library: reproducible simulation,
//! tuning, benchmarking, and evaluation experiments driven by a flat
//! key-value configuration with command-line overrides.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_benchmark, cmd_evaluate, cmd_simulate, cmd_tune, exit_code_for, run_benchmark,
    BenchmarkReport, EXIT_TUNE_FALLBACK,
};
pub use config::ExperimentConfig;
