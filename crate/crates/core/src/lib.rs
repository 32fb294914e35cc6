//! Distributed nonconvex optimization over networks.
//!
//! Two engines share one problem suite: decentralized gradient descent
//! ([`dgd`]) and gradient tracking over directed graphs ([`dogt`]). Each comes
//! with its Lyapunov function, merit measures and step-size bounds; [`saddle`]
//! adds second-order certificates and [`harness`] reproduces the experiments.

// Links the system OpenBLAS/LAPACK used by `linalg::eigenvalues`.
extern crate openblas_src;

pub mod dgd;
pub mod dogt;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod netweights;
pub mod problems;
pub mod rng;
pub mod saddle;
pub mod trace;

pub use error::{Error, Result};
