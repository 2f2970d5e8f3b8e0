//! Multi-view video-assistant-referee learning library.
//!
//! Per-view feature vectors are combined by an attention block (or by mean/max
//! pooling), fed to two classification heads (foul type, offence severity) and
//! trained end to end with a small reverse-mode tape. Metrics, rater-agreement
//! statistics, dataset formats and the experiment protocols live alongside.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the aliases at
//! the crate root fix it to `f64`, which is what the experiments use.

pub mod aggregation;
pub mod agreement;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numcore::Matrix<f64>;
pub type Vector = numcore::Vector<f64>;
pub type Tape = numcore::Tape<f64>;
pub type FeatureMatrix = aggregation::FeatureMatrix<f64>;
pub type AttentionWeights = aggregation::AttentionWeights<f64>;
pub type VarsModel = model::VarsModel<f64>;
pub type Prediction = model::Prediction<f64>;
pub type MultiViewSample = data::MultiViewSample<f64>;

pub type Matrix32 = numcore::Matrix<f32>;
pub type Vector32 = numcore::Vector<f32>;
pub type VarsModel32 = model::VarsModel<f32>;
