//! Spectral diagnostics for neural-network weight matrices.

pub mod covlap;
pub mod linalg;
pub mod rmt;
pub mod surgery;
pub mod tensorstore;
