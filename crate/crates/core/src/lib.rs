//! Decentralized first-order optimization over directed and undirected graphs.

pub mod algorithms;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod method;
pub mod metrics;
pub mod problems;
pub mod registry;
pub mod rng;
pub mod schedule;
pub mod stochastic;
pub mod weights;

pub use error::{Error, Result};
