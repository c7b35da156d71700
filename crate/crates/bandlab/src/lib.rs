//! Numerical laboratory for random band matrices: variance profiles, the
//! semicircle law, two-point kernels, deterministic chain approximations,
//! empirical resolvent chains and the characteristic flow.

pub mod chains;
pub mod cplx;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod flow;
pub mod harness;
pub mod kernels;
pub mod mterms;
pub mod semicircle;
pub mod stats;

pub use cplx::c64;
pub use error::{Error, Result};
pub use exec::Execution;
