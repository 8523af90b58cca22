//! Universal covert source coding.
//!
//! Compresses sequences from an unknown memoryless source into strings whose
//! law is close, in KL divergence, to an i.i.d. target law. Two constructions
//! live here: a type-based pipeline (uniform source codes, entropy estimation
//! and random binning) and a polar-code pipeline for binary alphabets.

pub mod bits;
pub mod covert;
pub mod criteria;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod exponent;
pub mod maps;
pub mod polar;
pub mod resolvability;
pub mod rng;
pub mod stats;
pub mod types;
pub mod uniform;

pub use error::{Error, Result};
