//! Library surface of the `rankaudit` command-line tool.

pub mod audit;
pub mod calibrate;
pub mod chart;
pub mod ingest;
pub mod report;
