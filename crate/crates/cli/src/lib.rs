//! Library side of the `cdep-bounds` command-line tool: configuration,
//! ingestion of micro-data and cell summaries, sensitivity-grid sweeps,
//! breakdown search and report emission.

pub mod check;
pub mod config;
pub mod error;
pub mod ingest;
pub mod problem;
pub mod report;

pub use config::{Config, EstimandSpec, SensitivitySpec};
pub use error::{CliError, Result};
pub use ingest::{ingest_cell_summary, ingest_csv, write_cell_summary, Ingested, OverlapPolicy};
pub use problem::{breakdown, run, Problem};
pub use report::{Report, ReportRow};
