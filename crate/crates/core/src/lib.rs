//! Reliability-aware microservice placement on failure-prone edge networks.

pub mod audit;
pub mod error;
pub mod pathfinding;
pub mod placement;
pub mod relcore;
pub mod rng;
pub mod simulator;
pub mod topology;
pub mod validation;
pub mod workload;

pub use error::{RelError, SimError, TopologyError, WorkloadError};
