//! Candidate evaluation shared by every placement algorithm: which links a
//! new instance needs, and which paths each of them would use.

use crate::pathfinding::{find_idps, shortest_feasible_path, Path, PathQuery};
use crate::topology::{InfrastructureNetwork, NodeId};
use crate::workload::{MsId, ServiceRequest};

use super::state::{PlacementState, RouteKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutePolicy {
    /// Internally disjoint paths of at most `k` hops.
    Disjoint { k: usize },
    /// The single minimum-latency path.
    Fastest,
}

/// A routable instance link. `paths` is empty when both ends share a node.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPlan {
    pub key: RouteKey,
    pub paths: Vec<Path>,
}

/// Routable links for one candidate node, grouped by the microservice at
/// the other end.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePlan {
    pub node: NodeId,
    pub index: usize,
    pub parents: Vec<(MsId, Vec<LinkPlan>)>,
    pub children: Vec<(MsId, Vec<LinkPlan>)>,
}

impl CandidatePlan {
    pub fn into_routes(self) -> Vec<(RouteKey, Vec<Path>)> {
        self.parents
            .into_iter()
            .chain(self.children)
            .flat_map(|(_, plans)| plans)
            .map(|p| (p.key, p.paths))
            .collect()
    }

    /// Sum over parent links of the fastest path latency (ms).
    pub fn parent_latency(&self, net: &InfrastructureNetwork) -> f64 {
        self.parents
            .iter()
            .flat_map(|(_, plans)| plans)
            .map(|p| {
                p.paths
                    .iter()
                    .map(|x| x.latency_ms(net))
                    .fold(f64::INFINITY, f64::min)
            })
            .map(|l| if l.is_finite() { l } else { 0.0 })
            .sum()
    }
}

/// Paths for request link `li` between `child_node` and `parent_node`, or
/// `None` when no route meets bandwidth and deadline.
pub fn plan_link(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    key: RouteKey,
    child_node: NodeId,
    parent_node: NodeId,
    policy: RoutePolicy,
) -> Option<Vec<Path>> {
    let link = &request.links[key.link];
    let budget = link.deadline
        - link.transmission_latency()
        - request.microservices[link.child].proc_latency / 1000.0;
    if budget < 0.0 {
        return None;
    }
    if child_node == parent_node {
        return Some(Vec::new());
    }
    let pool = state.pool_for(&key);
    let paths = match policy {
        RoutePolicy::Disjoint { k } => find_idps(
            net,
            &PathQuery {
                src: child_node,
                dst: parent_node,
                max_len: k,
                bw_required: link.bw_demand,
                pool,
                latency_budget: Some(budget),
            },
        ),
        RoutePolicy::Fastest => {
            shortest_feasible_path(net, child_node, parent_node, link.bw_demand, pool, Some(budget))
                .into_iter()
                .collect()
        }
    };
    (!paths.is_empty()).then_some(paths)
}

/// Plans every link a new instance of `m` on `node` would need. Returns
/// `None` unless each parent microservice keeps at least one routable
/// instance and, for a primary, each placed child does too.
pub fn plan_candidate(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    m: MsId,
    node: NodeId,
    policy: RoutePolicy,
) -> Option<CandidatePlan> {
    let index = state.instances[m].len();
    let mut plan = CandidatePlan {
        node,
        index,
        ..Default::default()
    };
    for (li, link) in request.links.iter().enumerate() {
        if link.child == m {
            let mut plans = Vec::new();
            for (pb, &pnode) in state.instances[link.parent].iter().enumerate() {
                let key = RouteKey {
                    link: li,
                    child_index: index,
                    parent_index: pb,
                };
                if let Some(paths) = plan_link(net, request, state, key, node, pnode, policy) {
                    plans.push(LinkPlan { key, paths });
                }
            }
            if plans.is_empty() {
                return None;
            }
            plan.parents.push((link.parent, plans));
        } else if link.parent == m && state.is_placed(link.child) {
            let mut plans = Vec::new();
            for (cb, &cnode) in state.instances[link.child].iter().enumerate() {
                let key = RouteKey {
                    link: li,
                    child_index: cb,
                    parent_index: index,
                };
                if let Some(paths) = plan_link(net, request, state, key, cnode, node, policy) {
                    plans.push(LinkPlan { key, paths });
                }
            }
            if plans.is_empty() && index == 0 {
                return None;
            }
            plan.children.push((link.child, plans));
        }
    }
    Some(plan)
}

/// Whether instance `(m, b)` still has a route to every parent microservice
/// and, for a primary, to every placed child.
pub fn instance_connected(request: &ServiceRequest, state: &PlacementState, m: MsId, b: usize) -> bool {
    request.links.iter().enumerate().all(|(li, link)| {
        if link.child == m {
            (0..state.instances[link.parent].len()).any(|pb| {
                state.routes.contains_key(&RouteKey {
                    link: li,
                    child_index: b,
                    parent_index: pb,
                })
            })
        } else if link.parent == m && b == 0 && state.is_placed(link.child) {
            (0..state.instances[link.child].len()).any(|cb| {
                state.routes.contains_key(&RouteKey {
                    link: li,
                    child_index: cb,
                    parent_index: b,
                })
            })
        } else {
            true
        }
    })
}
