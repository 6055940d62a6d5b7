//! Diffusion-MRI domain-shift toolkit: synthetic infant cohorts,
//! constrained spherical deconvolution, moment-based harmonization,
//! and a per-voxel neural FOD estimator, with experiment harnesses
//! for intra-site, cross-age, and cross-site evaluation.

pub mod csd;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harmonize;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod phantom;
pub mod seed;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{MaskVolume, ScalarVolume, Volume};
