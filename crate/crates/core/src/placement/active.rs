//! Per-edge index of shared-pool links held by active placements, used to
//! estimate backup path contention.

use std::collections::BTreeMap;

use crate::topology::{LinkId, Pool};
use crate::workload::{MsId, ServiceRequest};

use super::state::{PlacementState, RouteKey};

/// Backup instance `(request, microservice, index)` owning a shared link.
pub type Owner = (usize, MsId, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct SharedUse {
    pub owner: Owner,
    /// MBps the link would claim from the protected pool on activation.
    pub bw: f64,
    /// Probability that every lower-index instance of the owner is down.
    pub activation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SharedIndex {
    per_edge: Vec<Vec<SharedUse>>,
    edges_of: BTreeMap<usize, Vec<LinkId>>,
}

/// The backup end of a shared link: the child when it is a backup,
/// otherwise the parent.
pub fn owner_of(request: &ServiceRequest, state: &PlacementState, key: &RouteKey) -> Owner {
    let link = &request.links[key.link];
    if key.child_index > 0 {
        (state.request_id, link.child, key.child_index)
    } else {
        (state.request_id, link.parent, key.parent_index)
    }
}

/// `Π_{b'' < b} (1 - σ_{m(b'')})` from the reliabilities recorded at placement.
pub fn activation_probability(state: &PlacementState, m: MsId, b: usize) -> f64 {
    state.instance_sigma[m][..b.min(state.instance_sigma[m].len())]
        .iter()
        .map(|s| 1.0 - s)
        .product()
}

/// Shared links of one placement as `(edge, use)` pairs.
pub fn shared_uses(request: &ServiceRequest, state: &PlacementState) -> Vec<(LinkId, SharedUse)> {
    let mut out = Vec::new();
    for (key, route) in &state.routes {
        if route.pool != Pool::Shared {
            continue;
        }
        let owner = owner_of(request, state, key);
        let activation = activation_probability(state, owner.1, owner.2);
        for p in &route.paths {
            for &e in &p.edges {
                out.push((
                    e,
                    SharedUse {
                        owner,
                        bw: route.bw,
                        activation,
                    },
                ));
            }
        }
    }
    out
}

impl SharedIndex {
    pub fn new(edge_count: usize) -> Self {
        Self {
            per_edge: vec![Vec::new(); edge_count],
            edges_of: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, request: &ServiceRequest, state: &PlacementState) {
        let uses = shared_uses(request, state);
        let mut edges = Vec::with_capacity(uses.len());
        for (e, u) in uses {
            self.per_edge[e].push(u);
            edges.push(e);
        }
        edges.sort_unstable();
        edges.dedup();
        self.edges_of.insert(state.request_id, edges);
    }

    pub fn remove(&mut self, request_id: usize) {
        if let Some(edges) = self.edges_of.remove(&request_id) {
            for e in edges {
                self.per_edge[e].retain(|u| u.owner.0 != request_id);
            }
        }
    }

    pub fn uses(&self, edge: LinkId) -> &[SharedUse] {
        self.per_edge.get(edge).map_or(&[], |v| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.edges_of.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn per_edge_mut_for_tests(&mut self, edge: LinkId) -> &mut Vec<SharedUse> {
        &mut self.per_edge[edge]
    }
}
