//! IO, file formats and the `mmdistill` command-line tool.
//!
//! * [`tsv`]: `user<TAB>item` interaction lists.
//! * [`pmmf`]: the `PMMF` little-endian `f32` matrix container.
//! * [`dataset`]: a dataset directory with splits, features and stats.
//! * [`checkpoint`]: student and teacher checkpoints.
//! * [`config`]: flat `key = value` configuration files.
//! * [`logs`]: JSON-lines loss, metric and timing logs.
//! * [`report`]: parameter-count and compression reports.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod logs;
pub mod pmmf;
pub mod report;
pub mod tsv;

pub use error::{IoError, IoResult};
