//! Maximum-volume zonotopes that stay inside a box under affine dynamics over a
//! finite horizon.
//!
//! The crate covers the zonotope representation and its exact volume, the UTPD
//! and SFG parameterizations with their objectives, assembly of the invariance
//! constraints, a log-barrier interior-point solver, brute-force verification
//! oracles, random problem generation and the benchmark harness.

pub mod error;
pub mod experiment;
pub mod invariance;
pub mod numerics;
pub mod oracle;
pub mod params;
pub mod problem;
pub mod solver;
pub mod sysgen;
pub mod zonotope;

pub use error::{Error, Result};
