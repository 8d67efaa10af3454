//! Command-line plumbing and the review HTTP service for `rationale-bench`.

pub mod commands;
pub mod config;
pub mod serve;

pub use config::RunConfig;
