//! Pipeline orchestration for the `asymmap` command: configuration, stage
//! execution, run persistence and plot emission.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plots;
pub mod run;
