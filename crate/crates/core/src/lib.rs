//! Entropy bounds and finite-statistics randomness certification for
//! prepare-and-measure devices whose only trusted property is an energy bound.

pub mod bellmap;
pub mod certify;
pub mod config;
pub mod entropy;
pub mod error;
pub mod extract;
pub mod qset;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
