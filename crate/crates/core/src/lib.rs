//! Synthetic interferogram generation and CNN-based deformation detection.
//!
//! The crate builds wrapped interferograms from three synthetic components
//! (deformation from elastic half-space sources, stratified atmosphere over
//! topography, turbulent atmosphere from correlated noise), trains a compact
//! convolutional classifier on them, and detects deformation in rasters with
//! Gaussian-merged probability maps, atmospheric correction and ROC/PPV
//! evaluation.

pub mod error;
pub mod grid;
pub mod igrd;

pub mod atmos;
pub mod cnn;
pub mod config;
pub mod corpus;
pub mod correct;
pub mod dataset;
pub mod deform;
pub mod detect;
pub mod metrics;
pub mod viz;
pub mod workflow;

pub use error::{Error, Result};
