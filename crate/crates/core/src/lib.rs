#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod chain;
pub mod error;
pub mod exec;
pub mod env;
pub mod fermion;
pub mod neural;
pub mod ppo;
pub mod record;
pub mod schedule_opt;
pub mod statevector;

pub use error::{Error, Result};
