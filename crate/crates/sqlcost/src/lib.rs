//! Forecast the CPU-time and peak-memory cost class of a SQL query
//! before execution, from the query text alone.
//!
//! The crate covers the full lifecycle: ingesting query request logs,
//! discretizing resource usage into three ordered classes per resource,
//! bag-of-words featurization, training (random forest, gradient
//! boosting, logistic regression), versioned model bundles, an HTTP
//! prediction service with hot reload, weekly drift monitoring with
//! automated retraining, a synthetic workload generator, and a routing
//! simulator that quantifies what cost predictions buy a query router.
//!
//! Start with the runnable programs in `examples/`; each one exercises
//! a major capability end to end.

pub mod cli;
pub mod drift;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod ingest;
pub mod labeling;
pub mod model;
pub mod pipeline;
pub mod repo;
pub mod router;
pub mod serving;
pub mod synth;

pub use error::{Error, Result};
