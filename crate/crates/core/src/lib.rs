//! Kernel feature learning: iteratively reweighted kernel machines (IRKM) and
//! recursive feature machines (RFM) on top of weighted kernel ridge regression,
//! together with a Fourier-Walsh / Hermite ground-truth engine for checking
//! which coordinates and directions a run has identified.
//!
//! | module | contents |
//! |---|---|
//! | [`numerics`] | symmetric matrices, SPD solves with jitter escalation, PSD square roots, subspaces |
//! | [`kernels`] | kernel families, weighted Gram matrices, input gradients, weight derivatives |
//! | [`krr`] | kernel ridge regression fit / predict / gradient |
//! | [`estimators`] | empirical squared gradients, DN estimator, AGOP, safeguarded normalization |
//! | [`trainers`] | the IRKM(α) and RFM(α) loops and the plain KRR baseline |
//! | [`orthopoly`] | Fourier-Walsh and Hermite polynomials, leap complexity |
//! | [`data`] | reproducible RNG streams, samplers, targets, CSV ingestion |

pub mod data;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod krr;
pub mod numerics;
pub mod orthopoly;
pub mod trainers;

pub use error::{Error, Result};
