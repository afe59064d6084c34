//! Command-line configuration, CSV ingestion and report files.

pub mod commands;
pub mod config;
pub mod emit;
pub mod ingest;

pub use commands::{run, Summary};
pub use config::{parse_config, Cli, Command, Protocol, RunConfig};
pub use ingest::{ingest_paired_csv, ingest_point_csv, write_paired_csv, PairedTable};
