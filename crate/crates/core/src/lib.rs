//! Interpolation-prediction networks for sparse, irregularly sampled
//! multivariate time series.
//!
//! A sample's channels are re-represented on an evenly spaced reference grid
//! by a two-layer RBF interpolation network ([`interp`]), producing smooth
//! cross-channel trends, transients and observation intensities. A GRU
//! ([`predict`]) reads the resulting time slices and feeds a classification
//! or regression head. Both parts are trained together ([`train`]) on a
//! prediction loss plus the reconstruction error of randomly held-out
//! observations.

pub mod data;
pub mod error;
pub mod eval;
pub mod interp;
pub mod model;
pub mod predict;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
