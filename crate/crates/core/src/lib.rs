//! Uncertainty bounds for sequence-to-sequence regression.
//!
//! A recurrent encoder-decoder base regressor is paired with a meta decoder
//! that learns to predict the base model's residual magnitude. The crate also
//! carries the comparison baselines (Gaussian variance head, variational
//! dropout, GARCH, constant band) and the interval evaluation machinery:
//! missrate, bandwidth, excess and deficit, band-scale calibration and
//! operating-point reports.

pub mod calibration;
pub mod data;
pub mod error;
pub mod garch;
pub mod metrics;
pub mod models;
pub mod seqnet;
pub mod types;

pub use error::{Error, Result};
pub use types::{BoundedPrediction, Matrix, ResidualTarget, SequenceSample, Standardization};
