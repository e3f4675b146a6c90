//! Canonical correlation analysis between the power spectra of multi-subject
//! stationary time series and correlated static outcomes.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`dataset`] loads a wide panel of equally spaced series plus a matrix
//!    of per-subject outcomes.
//! 2. [`spectral`] computes periodograms over the Fourier frequencies
//!    `l / T`, `l = 1..floor((T-1)/2)`, and the cosine design used to
//!    parameterize log-spectra.
//! 3. [`cepstral`] fits truncated cepstral coefficients per subject by
//!    maximizing the Whittle likelihood with Fisher scoring, choosing the
//!    truncation order by an AIC-type criterion.
//! 4. [`cca`] runs a plug-in canonical correlation analysis between the
//!    fitted cepstra and the outcomes, returning canonical correlations and
//!    weight functions for both sides.
//!
//! [`simulate`] generates panels from a random-spectrum model with known
//! canonical structure and measures estimation error over many replicates.

pub mod cca;
pub mod cepstral;
pub mod dataset;
mod error;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};

/// Euler–Mascheroni constant; `-E[log(E)]` for a unit exponential `E`.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
