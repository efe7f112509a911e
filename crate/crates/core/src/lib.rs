#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cost;
pub mod counters;
pub mod data;
pub mod encoding;
pub mod error;
pub mod federation;
pub mod modes;
pub mod paillier;
pub mod tree;

pub use error::{Error, ErrorCategory, Result};
