//! Calibration of input-dependent, possibly skewed error distributions around
//! deterministic point predictions.
//!
//! A small network maps inputs to the parameters of a Gaussian, two-piece
//! Gaussian or asymmetric Laplace error distribution. It is trained on a
//! weighted blend of mean CRPS (accuracy) and the reliability score of the
//! PIT values, and the resulting model emits prediction intervals and
//! verification metrics.

pub mod data;
pub mod distributions;
mod dual;
pub mod error;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod scoring;
pub mod seed;
pub mod special;
pub mod synthetic;

pub use data::{split, Dataset, PairRecord, Partition, SplitDataset};
pub use distributions::{DistributionFamily, DistributionParams};
pub use error::{Error, Result};
pub use scoring::{BetaWeight, ScorePair};
