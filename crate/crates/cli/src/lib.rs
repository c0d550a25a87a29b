//! Support library for the `uvesc` binary: TOML config ingestion and
//! trajectory CSV emission/re-ingestion.

pub mod config;
pub mod csvio;
