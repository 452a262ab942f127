//! Vocal-burst emotion, age and country recognition: signal front end,
//! a small neural-network engine, task-specific CNN embedders, a
//! multi-task learner with fusion, challenge metrics and an experiment
//! pipeline.

mod binio;
pub mod data;
pub mod embedder;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mtl;
pub mod nn;
pub mod signal;

pub use error::{Error, Result};
