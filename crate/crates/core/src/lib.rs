//! Stratified optimum-allocation sampling, per-stratum feature extraction,
//! range-filtered correlation feature selection and cross-validated
//! classification of single-channel EEG recordings.
//!
//! The stages compose as
//! [`corpus`] → [`sampler`] → [`features`] → [`selection`] →
//! [`classifiers`] / [`evaluation`], with [`pipeline`] driving the whole
//! chain from a [`pipeline::PipelineConfig`] and [`report`] rendering the
//! results.

pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod report;
pub mod sampler;
pub mod seed;
pub mod selection;
mod stats;

pub use error::{Error, Result};
