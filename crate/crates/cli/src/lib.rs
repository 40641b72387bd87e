//! Command-line front end: file formats, ingestion and the `simulate`,
//! `fit`, `summarize`, `evaluate` and `bench` commands.

pub mod artifacts;
pub mod bench;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod pipeline;

pub use error::{CliError, IngestError, Result};
