//! File formats, parallel drivers and the command line for `simnet-core`.

pub mod cli;
pub mod export;
pub mod format;
pub mod parallel;
pub mod pipeline;
