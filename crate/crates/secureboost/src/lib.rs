//! Runtime around `secureboost-core`: transports, dataset and model files,
//! configuration, metrics and whole-session drivers.

pub mod artifact;
pub mod cli;
pub mod config;
pub mod error;
pub mod inproc;
pub mod io;
pub mod metrics;
pub mod session;
pub mod synth;
pub mod tcp;

pub use error::{Error, Result};
pub use secureboost_core as core;
