//! Bayesian non-parametric co-clustering of real-valued data matrices.
//!
//! The model places Dirichlet-process priors on the row and column
//! partitions of an `n x p` matrix of `d`-dimensional cells and a
//! Normal-Inverse-Wishart prior on the Gaussian component of each block.
//! Inference integrates the component parameters out analytically and
//! resamples only memberships (collapsed Gibbs).
//!
//! Two samplers are provided:
//!
//! * [`gibbs::fit_centralized`] — the single-process baseline that sweeps
//!   rows and columns over the full matrix.
//! * [`runtime::fit_distributed`] — a master/worker sampler in which each
//!   worker resamples a local row partition and ships only cluster sizes
//!   and sufficient statistics `(count, mean, scatter)` to a master that
//!   clusters the local clusters and resamples the column partition.
//!
//! [`data`] holds the synthetic block generator, CSV I/O and the ARI/NMI
//! metrics used to score recovered partitions.

pub mod data;
pub mod error;
pub mod gibbs;
pub mod master;
pub mod niw;
pub mod partition;
pub mod runtime;
pub mod worker;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
