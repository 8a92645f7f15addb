//! Ideal quantum measurement as a dynamical process: a spin ½ measured by a
//! Curie-Weiss magnet, with the truncation, registration and run-splitting
//! stages, decomposition ambiguity, contextuality checks, and a brute-force
//! dense oracle.

// Parameter guards use `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curie_weiss;
pub mod error;
pub mod linalg;
pub mod qstate;
pub mod equilibrium;
pub mod runs;
pub mod ambiguity;
pub mod contextuality;
pub mod oracle;

pub use error::{Error, Result};
pub use qstate::{DensityOperator, Observable};
