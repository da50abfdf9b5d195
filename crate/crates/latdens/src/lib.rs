//! Exact local representation densities of quadratic lattices over Z_p (p odd).
//!
//! The crate computes, in exact rational arithmetic:
//! - lattice invariants, Jordan data and Hilbert/Hasse symbols (`padic`),
//! - finite orthogonal group combinatorics over F_p (`finiteq`),
//! - integral overlattice enumeration (`overlattice`),
//! - a brute-force representation-counting oracle (`oracle`),
//! - normalized local Siegel series, their central derivatives,
//!   functional equations and induction identities (`siegel`),
//! - horizontal-lattice degrees, vertex-lattice intersection functions and
//!   indicator-Fourier local modularity checks (`geometry`),
//! - coset-count invariants of type-t lattices (`counting`),
//! - and a machine-readable CLI (`cli`).

pub mod cli;
pub mod counting;
pub mod error;
pub mod finiteq;
pub mod geometry;
pub mod oracle;
pub mod overlattice;
pub mod padic;
pub mod qmat;
pub mod siegel;

pub use error::{Error, Result};
