//! Estimating the number of clusters of a block Markov chain from one
//! observed trajectory.
//!
//! The pipeline counts singular values of the trimmed transition-count
//! matrix above a threshold ([`estimators::alg1_spectral_count`]), peels dense
//! neighborhoods off the spectral embedding ([`estimators::density_peel`]) and
//! optionally completes the clustering by nearest center
//! ([`estimators::alg3_complete`]). Baseline estimators, clustering metrics
//! and a seeded experiment harness sit alongside.

pub mod counts;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
