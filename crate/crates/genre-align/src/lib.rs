//! File formats, configuration files and the `genre-align` command-line
//! driver around [`genre_align_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use error::{Error, Result};
