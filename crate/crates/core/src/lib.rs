//! Sit-to-stand (SiSt) transition detection and duration measurement from
//! dual-foot load-cell + IMU recordings.
//!
//! The pipeline runs: synchronization, windowing with midpoint labels,
//! class-balancing augmentation, feature extraction, mRMR selection, a bagged
//! decision-tree ensemble, majority-vote smoothing and valley-peak-valley
//! duration measurement, evaluated with participant-wise cross-validation.

pub mod augment;
pub mod classifier;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod postprocess;
pub mod seed;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
