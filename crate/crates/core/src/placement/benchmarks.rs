//! Baseline heuristics: greedy by node reliability (with or without
//! backups), DAIP, and RRSP. All route each link on its fastest feasible
//! path.

use rand::seq::IndexedRandom;

use crate::rng::rng_from;
use crate::topology::{InfrastructureNetwork, NodeId, LEDGER_EPS};
use crate::workload::{MsId, ServiceRequest};

use super::routing::{plan_candidate, CandidatePlan, RoutePolicy};
use super::state::PlacementState;
use super::{candidate_nodes, commit, round_robin_backups, PlacementConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKey {
    /// Reliability at the current load.
    Current,
    /// Reliability once the instance is added.
    After,
    /// As `After`, ties broken by the summed latency to the parents.
    AfterThenLatency,
}

/// Tries candidate nodes for a new instance of `m` best key first and
/// commits the first one that routes.
fn greedy_instance(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    m: MsId,
    cfg: &PlacementConfig,
    key: NodeKey,
) -> bool {
    let demand = request.microservices[m].cpu_demand;
    let mut ranked: Vec<(f64, f64, NodeId, Option<CandidatePlan>)> = Vec::new();
    for n in candidate_nodes(net, request, state, m, cfg) {
        let rel = match key {
            NodeKey::Current => net.node_reliability(n),
            NodeKey::After | NodeKey::AfterThenLatency => net.node_reliability_after(n, demand),
        };
        if key == NodeKey::AfterThenLatency {
            let Some(plan) = plan_candidate(net, request, state, m, n, RoutePolicy::Fastest) else {
                continue;
            };
            ranked.push((rel, plan.parent_latency(net), n, Some(plan)));
        } else {
            ranked.push((rel, 0.0, n, None));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, _, n, plan) in ranked {
        let plan = match plan {
            Some(p) => p,
            None => match plan_candidate(net, request, state, m, n, RoutePolicy::Fastest) {
                Some(p) => p,
                None => continue,
            },
        };
        if commit(net, request, state, m, plan) {
            return true;
        }
    }
    false
}

fn primaries(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
    key: NodeKey,
) -> bool {
    request
        .bfs_order()
        .into_iter()
        .all(|m| greedy_instance(net, request, state, m, cfg, key))
}

/// Grd, and Grd-B when `backups` is set: most reliable node at current load.
pub(crate) fn grd(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
    backups: bool,
) -> bool {
    if !primaries(net, request, state, cfg, NodeKey::Current) {
        return false;
    }
    if backups {
        let order: Vec<MsId> = (1..request.microservices.len()).collect();
        round_robin_backups(request, &order, |m| {
            greedy_instance(net, request, state, m, cfg, NodeKey::Current)
        });
    }
    true
}

/// DAIP: most reliable node after placement, nearest to the parents among
/// equals, round-robin backups.
pub(crate) fn daip(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
) -> bool {
    if !primaries(net, request, state, cfg, NodeKey::AfterThenLatency) {
        return false;
    }
    let order: Vec<MsId> = (1..request.microservices.len()).collect();
    round_robin_backups(request, &order, |m| {
        greedy_instance(net, request, state, m, cfg, NodeKey::AfterThenLatency)
    });
    true
}

/// Random CPU-feasible primary assignments in breadth-first order, or `None`
/// if some microservice finds no node with room.
fn random_assignment(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    order: &[MsId],
    rng: &mut impl rand::Rng,
) -> Option<(Vec<NodeId>, Vec<f64>)> {
    let mut extra = vec![0.0; net.node_count()];
    let mut assign = vec![request.access_node; request.microservices.len()];
    for &m in order {
        let demand = request.microservices[m].cpu_demand;
        let feasible: Vec<NodeId> = (0..net.node_count())
            .filter(|&n| net.nodes[n].cpu_residual() - extra[n] + LEDGER_EPS >= demand)
            .collect();
        let &n = feasible.choose(rng)?;
        assign[m] = n;
        extra[n] += demand;
    }
    Some((assign, extra))
}

/// RRSP: the best of `rrsp_candidates` random assignments by the product of
/// post-placement reliabilities of the nodes used; backups go to
/// high-degree microservices first.
pub(crate) fn rrsp(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
    seed: u64,
) -> bool {
    let order = request.bfs_order();
    let mut rng = rng_from(seed, &[request.id as u64]);
    let mut candidates: Vec<(f64, Vec<NodeId>)> = Vec::new();
    for _ in 0..cfg.rrsp_candidates {
        let Some((assign, extra)) = random_assignment(net, request, &order, &mut rng) else {
            continue;
        };
        let score: f64 = (0..net.node_count())
            .filter(|&n| extra[n] > 0.0 || assign[1..].contains(&n))
            .map(|n| net.node_reliability_after(n, extra[n]))
            .product();
        candidates.push((score, assign));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut placed = false;
    for (_, assign) in candidates {
        let ok = order.iter().all(|&m| {
            plan_candidate(net, request, state, m, assign[m], RoutePolicy::Fastest)
                .is_some_and(|plan| commit(net, request, state, m, plan))
        });
        if ok {
            placed = true;
            break;
        }
        state.release_all(net, request);
    }
    if !placed {
        return false;
    }
    let mut by_degree: Vec<MsId> = (1..request.microservices.len()).collect();
    by_degree.sort_by_key(|&m| std::cmp::Reverse(request.incident_links(m).count()));
    round_robin_backups(request, &by_degree, |m| {
        greedy_instance(net, request, state, m, cfg, NodeKey::After)
    });
    true
}
