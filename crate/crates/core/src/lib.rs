#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod reservoir;
pub mod rng;
pub mod seqspace;
pub mod volterra;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
