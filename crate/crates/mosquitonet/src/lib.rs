//! Dataset IO, training driver, benchmarks, CLI and HTTP service around
//! [`mosquitonet_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod fit;
pub mod report;
pub mod service;
pub mod synthetic;

pub use error::{Error, Result};
pub use mosquitonet_core as core;
