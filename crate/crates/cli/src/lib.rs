//! Command-line and HTTP fronts over `ncc-core`.

pub mod api;
pub mod cli;
pub mod server;
