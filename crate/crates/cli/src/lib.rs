//! File formats, stream ingestion, Monte Carlo experiments and subcommands
//! for the `sprint-cusum` command-line tool.

pub mod commands;
pub mod experiments;
pub mod io;
pub mod schedule_file;
