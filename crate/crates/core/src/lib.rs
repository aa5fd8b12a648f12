//! Language-modeling toolkit for source-code corpora.

pub mod corpus;
pub mod evalmetrics;
pub mod models;
pub mod ncore;
pub mod registry;
pub mod synparse;
pub mod tasks;
pub mod trainer;
