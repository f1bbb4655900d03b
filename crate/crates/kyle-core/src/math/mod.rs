//! Numerical primitives shared across the crate.

pub mod interp;
pub mod normal;
pub mod quad;
pub mod stats;
