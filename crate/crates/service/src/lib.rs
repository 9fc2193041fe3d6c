//! Command line and HTTP service around the catforge pipeline.

pub mod api;
pub mod app;
pub mod cli;
pub mod ops;
