//! Monomer-aware global alignment kernels for cyclic peptides.
//!
//! Peptides are ordered sequences of monomers, each carrying a hashed count
//! fingerprint. The crate provides
//!
//! - token kernels on fingerprints and positions ([`local_kernels`]),
//! - the GAK, MD-GAK and PMD-GAK dynamic programs plus Gram assembly and
//!   eigenvalue checks ([`alignment`], [`gram`]),
//! - exact GP regression and Laplace GP classification over precomputed
//!   Gram matrices ([`gp`]),
//! - metrics, leakage-aware split generators and nested cross-validation
//!   ([`eval`]).
//!
//! The dataset interchange format is line-delimited JSON, see [`repr`].

pub mod alignment;
pub mod error;
pub mod eval;
pub mod gp;
pub mod gram;
pub mod kernel;
pub mod local_kernels;
pub mod model;
pub mod repr;

pub use error::{Error, ErrorKind, Result};
pub use gram::GramMatrix;
pub use kernel::{KernelFamily, KernelSpec};
pub use repr::{Dataset, MonomerRecord, PeptideRecord, SparseCountVector};
