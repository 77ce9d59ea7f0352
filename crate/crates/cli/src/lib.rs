//! Command-line harness for the recalibration pipeline.
//!
//! | Command        | Writes                                                      |
//! |----------------|-------------------------------------------------------------|
//! | `run`          | `results.csv`, `summary.csv`, checkpoints, sampled data     |
//! | `reliability`  | bin CSV and two-panel SVG for one checkpoint                |
//! | `verify-bound` | `bound.csv`; `bound-violation.json` on failure (exit 2)     |
//! | `iw-report`    | ranked weight-spread CSV and SVG                            |
//!
//! `results.csv` has the fixed header `method,seed,ece,overconf_ece,cls_error,wall_ms`.
//! `wall_ms` is `NA` unless the config sets `record_wall_clock`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

pub use error::{CliError, Result};
