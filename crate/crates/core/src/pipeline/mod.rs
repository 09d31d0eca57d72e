//! Configuration, tick ingestion, artifact I/O and experiment orchestration.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod io;

pub use config::{Dgp, JumpSettings, RunConfig};
pub use experiment::{execute, run_experiment, Command, Manifest, MANIFEST_FILE};
pub use ingest::{ingest_file, ingest_ticks, SessionCalendar};
