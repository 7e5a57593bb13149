//! Representation Jensen-Shannon divergence between sample sets.
//!
//! Samples are embedded with unit-norm Fourier features, summarized by their
//! uncentered covariance matrices, and compared through von Neumann entropies.
//! The embedding can be trained to tighten the estimate, and the estimator is
//! used for permutation two-sample tests and as a GAN critic objective.

pub mod data;
pub mod divergence;
pub mod error;
pub mod estimate;
pub mod features;
pub mod gan;
pub mod grad;
pub mod io;
pub mod selfcheck;
pub mod spectral;
pub mod tst;

pub use data::SampleSet;
pub use divergence::{rjsd_cov, rjsd_features, rjsd_kernel, CovariancePair};
pub use error::{Error, Result};
pub use features::{DeepFourierNetwork, FourierFeatureMap};
pub use spectral::{eigh_psd, vn_entropy, PsdMatrix, Spectrum};
