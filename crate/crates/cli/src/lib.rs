//! Task runner for ground-state studies of the cavity array: configuration,
//! parallel job execution with caching, result tables and plot data.

pub mod config;
pub mod jobs;
pub mod plot;
pub mod store;
pub mod tasks;
