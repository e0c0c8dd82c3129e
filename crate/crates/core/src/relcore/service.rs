//! Service reliability of a placement: effective link probabilities,
//! instance and microservice reliabilities, and the whole dependency graph.
//!
//! Node reliabilities are passed as a snapshot so callers can evaluate a
//! placement against loads other than the current ones.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::RelError;
use crate::pathfinding::Path;
use crate::placement::{PlacementState, Route, RouteKey};
use crate::topology::{InfrastructureNetwork, NodeId};
use crate::workload::{MsId, ServiceRequest};

/// Knobs for model sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelOptions {
    /// Every instance reliability is scaled by `1 - instance_bias`.
    pub instance_bias: f64,
}

/// Nodes hosting every instance of some microservice (the access node is
/// always one, through the access microservice).
pub fn critical_nodes(state: &PlacementState) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for inst in &state.instances {
        if let Some(&first) = inst.first() {
            if inst.iter().all(|&n| n == first) {
                out.insert(first);
            }
        }
    }
    out
}

pub fn effective_link_probability(link_software_rel: f64, end_to_end_rel: f64) -> f64 {
    link_software_rel * end_to_end_rel
}

/// Reliability of a set of internally disjoint paths with the endpoints
/// removed and `critical` nodes treated as perfect.
pub fn path_set_reliability(
    net: &InfrastructureNetwork,
    node_rel: &[f64],
    paths: &[Path],
    critical: &BTreeSet<NodeId>,
) -> f64 {
    let q: f64 = paths
        .iter()
        .map(|p| {
            let nodes: f64 = p
                .interior()
                .iter()
                .filter(|n| !critical.contains(n))
                .map(|&n| node_rel[n])
                .product();
            let edges: f64 = p.edges.iter().map(|&e| net.link_reliability(e)).product();
            1.0 - nodes * edges
        })
        .product();
    1.0 - q
}

fn route_reliability(
    net: &InfrastructureNetwork,
    node_rel: &[f64],
    route: Option<&Route>,
    same_node: bool,
    critical: &BTreeSet<NodeId>,
) -> f64 {
    match route {
        Some(r) if r.colocated() => 1.0,
        Some(r) => path_set_reliability(net, node_rel, &r.paths, critical),
        None if same_node => 1.0,
        None => 0.0,
    }
}

/// Reliability of instance `b` of `m` together with the links to all its
/// parents' instances, excluding its own node.
pub fn instance_reliability(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    node_rel: &[f64],
    critical: &BTreeSet<NodeId>,
    m: MsId,
    b: usize,
    opts: ModelOptions,
) -> Result<f64, RelError> {
    if m == 0 {
        return Ok(1.0);
    }
    let node = state.node_of(m, b).ok_or(RelError::Unplaced(m))?;
    let mut sigma = request.microservices[m].reliability() * (1.0 - opts.instance_bias);
    for (li, link) in request.links.iter().enumerate() {
        if link.child != m {
            continue;
        }
        let parents = &state.instances[link.parent];
        if parents.is_empty() {
            return Err(RelError::Unplaced(link.parent));
        }
        let mut all_fail = 1.0;
        for (pb, &pnode) in parents.iter().enumerate() {
            let key = RouteKey {
                link: li,
                child_index: b,
                parent_index: pb,
            };
            let r = route_reliability(net, node_rel, state.routes.get(&key), pnode == node, critical);
            all_fail *= 1.0 - effective_link_probability(link.reliability(), r);
        }
        sigma *= 1.0 - all_fail;
    }
    Ok(sigma)
}

/// Combines per-node instance reliabilities of one microservice. Each entry
/// is `(r_n, σ_{m,n}, n is critical)`. A non-critical hosting node
/// contributes `1 - r_n σ_{m,n}` to the failure product; a critical one
/// contributes `1 - σ_{m,n}` because its own reliability is counted once at
/// service level.
pub fn combine_across_nodes(per_node: &[(f64, f64, bool)]) -> f64 {
    let q: f64 = per_node
        .iter()
        .map(|&(r_n, s, critical)| if critical { 1.0 - s } else { 1.0 - r_n * s })
        .product();
    1.0 - q
}

/// Reliability of all instances of `m` and their parent links.
pub fn microservice_reliability(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    node_rel: &[f64],
    critical: &BTreeSet<NodeId>,
    m: MsId,
    opts: ModelOptions,
) -> Result<f64, RelError> {
    if m == 0 {
        return Ok(1.0);
    }
    if state.instances[m].is_empty() {
        return Err(RelError::Unplaced(m));
    }
    let mut per_node: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (b, &n) in state.instances[m].iter().enumerate() {
        let s = instance_reliability(net, request, state, node_rel, critical, m, b, opts)?;
        let q = per_node.entry(n).or_insert(1.0);
        *q *= 1.0 - s;
    }
    let terms: Vec<(f64, f64, bool)> = per_node
        .into_iter()
        .map(|(n, q)| (node_rel[n], 1.0 - q, critical.contains(&n)))
        .collect();
    Ok(combine_across_nodes(&terms))
}

/// Reliability of the whole dependency graph: critical nodes once, times
/// every microservice's reliability.
pub fn service_reliability_with(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    node_rel: &[f64],
    opts: ModelOptions,
) -> Result<f64, RelError> {
    if let Some(m) = (0..state.instances.len()).find(|&m| state.instances[m].is_empty()) {
        return Err(RelError::Unplaced(m));
    }
    let critical = critical_nodes(state);
    let mut r: f64 = critical.iter().map(|&n| node_rel[n]).product();
    for m in 1..request.microservices.len() {
        r *= microservice_reliability(net, request, state, node_rel, &critical, m, opts)?;
    }
    Ok(r)
}

/// [`service_reliability_with`] at the network's current loads.
pub fn service_reliability(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
) -> Result<f64, RelError> {
    service_reliability_with(net, request, state, &net.node_reliabilities(), ModelOptions::default())
}
