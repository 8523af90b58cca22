//! Polar-code construction for binary sources and binary targets.

mod profile;
mod sc;
mod scheme;
mod transform;

pub use profile::*;
pub use sc::*;
pub use scheme::*;
pub use transform::*;
