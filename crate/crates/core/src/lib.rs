//! Kinematic and recurrence-based analysis of pose keypoint time series.
//!
//! The crate covers the whole path from tracked keypoints to dynamical
//! measures: ingestion, confidence masking and gap filling, zero-phase
//! filtering, Procrustes alignment, kinematic features, delay embedding with
//! AMI/FNN parameter selection, recurrence quantification (auto, cross, joint
//! and multidimensional), PCA of postures, and a gap-interpolation simulation.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the CLI uses.

pub mod align;
pub mod embedding;
pub mod error;
pub mod gapsim;
pub mod ingest;
pub mod kinematics;
pub mod linalg;
pub mod model;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod recurrence;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use model::{make_windows, PoseSequence, Series, TimeBase, WindowSpec};

pub type Series64 = model::Series<f64>;
pub type Series32 = model::Series<f32>;
pub type PoseSequence64 = model::PoseSequence<f64>;
pub type PoseSequence32 = model::PoseSequence<f32>;
pub type RecurrenceMatrix64 = recurrence::RecurrenceMatrix<f64>;
pub type RqaMetrics64 = recurrence::RqaMetrics<f64>;
pub type ProcrustesTransform64 = align::ProcrustesTransform<f64>;
pub type Template64 = align::Template<f64>;
pub type PcaModel64 = pca::PcaModel<f64>;
pub type PcaModel32 = pca::PcaModel<f32>;
