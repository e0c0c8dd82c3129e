use thiserror::Error;

use crate::topology::Pool;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("network must contain at least one node")]
    NoNodes,
    #[error("edge probability {0} outside (0, 1]")]
    BadEdgeProbability(f64),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("link {0} does not exist")]
    UnknownLink(usize),
    #[error("negative resource amount {0}")]
    NegativeAmount(f64),
    #[error("node {node}: allocating {requested} cores exceeds capacity ({allocated} of {capacity} used)")]
    CpuExceeded {
        node: usize,
        requested: f64,
        allocated: f64,
        capacity: f64,
    },
    #[error("link {link}: allocating {requested} MBps in {pool:?} pool exceeds limit ({allocated} of {limit} used)")]
    BandwidthExceeded {
        link: usize,
        pool: Pool,
        requested: f64,
        allocated: f64,
        limit: f64,
    },
    #[error("invalid topology: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("access node set is empty")]
    NoAccessNodes,
    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: usize, reason: String },
    #[error("latency needs at least one path")]
    EmptyPathSet,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelError {
    #[error("minus operator domain error: x = {x}, y = {y}")]
    MinusDomain { x: f64, y: f64 },
    #[error("matrix order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("microservice {0} has no placed instance")]
    Unplaced(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}
