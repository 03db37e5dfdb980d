//! Distributed collaborative hashing: parameter-server training, evaluation,
//! file formats and the `dch` command-line tool.

#![warn(missing_docs)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod eval;
pub mod io;
pub mod runtime;
pub mod synth;
