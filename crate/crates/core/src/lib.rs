//! Simulation core for propagation-of-chaos experiments on mean-field
//! jump processes: clocks, kinetic models, the forward particle system,
//! backward interaction graphs and the chaos estimators built on them.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chaos;
pub mod clocks;
pub mod combinatorics;
pub mod error;
pub mod forward;
pub mod functionals;
pub mod graph;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
