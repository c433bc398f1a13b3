//! Meta-learning toolkit for choosing a multi-target regression method.
//!
//! The crate generates synthetic multi-target datasets, scores four
//! problem-transformation methods on them, describes each dataset with 58
//! complexity meta-features and trains recommenders that map meta-features to
//! the best method.

pub mod dataset;
pub mod error;
pub mod generator;
pub mod metafeatures;
pub mod metalearn;
pub mod methods;
pub mod pipeline;
pub mod regressors;
pub mod rng;
pub mod stats;

pub use dataset::Dataset;
pub use error::{Error, Result};
