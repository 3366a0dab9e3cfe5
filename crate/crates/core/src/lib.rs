//! Erasable collaborative filtering.
//!
//! Users are split into balanced groups by clustering a hypergraph-derived
//! collaborative embedding. A recommender is trained over the groups one
//! after another, most cohesive group first, with a checkpoint after every
//! group. Erasing users then only rolls back to the checkpoint before their
//! earliest group and retrains the suffix.

pub mod cfmodels;
pub mod cli;
pub mod embed;
pub mod error;
pub mod eval;
pub mod grouping;
pub mod hypergraph;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

mod binio;

pub use error::{LaserError, Result};
