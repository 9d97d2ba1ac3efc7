//! File formats, run configuration and the `bmap` command line on top of
//! [`bmap_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod fsio;
pub mod pipeline;
pub mod report;
pub mod volume;

pub use bmap_core;
pub use error::{Error, Result};
