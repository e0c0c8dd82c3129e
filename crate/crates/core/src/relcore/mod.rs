//! Network-aware reliability model.

pub mod algebra;
pub mod matrix;
pub mod service;

pub use algebra::{minus, op_minus, op_plus, op_times, plus, PathTerm, RelValue};
pub use matrix::{mat_add, mat_mul, network_reliability_matrix, one_step, PathRelMatrix};
pub use service::{
    combine_across_nodes, critical_nodes, effective_link_probability, instance_reliability,
    microservice_reliability, path_set_reliability, service_reliability,
    service_reliability_with, ModelOptions,
};
