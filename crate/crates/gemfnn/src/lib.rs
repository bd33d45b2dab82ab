//! File formats, benchmark studies and the command-line front end built on
//! [`gemfnn_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod model_file;
pub mod verify;

mod error;

pub use error::{Error, Result};
