//! Readscale: does a language model's fit to human reading data grow with its size?
//!
//! The crate covers the whole pipeline after vector extraction: reading
//! response tables and vector bundles, preprocessing, aligning model vectors
//! to response rows, wide linear regression, and the scaling experiments.

pub mod corpus;
pub mod error;
pub mod experiments;
pub mod features;
pub mod preprocess;
pub mod regression;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
