//! Reliability-aware placement: breadth-first primaries with bounded
//! backtracking, then backups for the weakest microservice first.

use std::collections::BTreeSet;

use crate::relcore::{critical_nodes, path_set_reliability};
use crate::topology::{InfrastructureNetwork, NodeId};
use crate::workload::{MsId, ServiceRequest};

use super::active::shared_uses;
use super::routing::{plan_candidate, CandidatePlan, LinkPlan, RoutePolicy};
use super::sprc::Contention;
use super::state::{Mechanism, PlacementState};
use super::{candidate_nodes, commit, PlacementConfig, PlacementContext};

pub(crate) fn place(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
    ctx: PlacementContext<'_>,
    sprc: bool,
) -> bool {
    let order = request.bfs_order();
    while let Some(&m) = order.iter().find(|&&m| !state.is_placed(m)) {
        if place_one(net, request, state, m, cfg, ctx, sprc) {
            continue;
        }
        if m == order[0] || state.backtracks >= cfg.backtrack_limit {
            return false;
        }
        let parents: Vec<MsId> = request.parents_of(m).into_iter().filter(|&p| p != 0).collect();
        if parents.is_empty() {
            return false;
        }
        state.backtracks += 1;
        let mut undo: BTreeSet<MsId> = BTreeSet::new();
        for &p in &parents {
            let node = state.instances[p][0];
            state.blacklist[p].insert(node);
            undo.insert(p);
            undo.extend(request.children_of(p));
        }
        // Anything placed below an undone microservice goes too.
        for &u in &order {
            if request.parents_of(u).iter().any(|p| undo.contains(p)) {
                undo.insert(u);
            }
        }
        for &u in order.iter().rev() {
            if undo.contains(&u) {
                while state.is_placed(u) {
                    state.remove_last_instance(net, request, u);
                }
            }
        }
    }
    place_backups(net, request, state, cfg, ctx, sprc);
    true
}

/// Gives backups, one at a time, to the microservice with the lowest latest
/// recorded reliability, dropping any that cannot take another instance.
pub(crate) fn place_backups(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    cfg: &PlacementConfig,
    ctx: PlacementContext<'_>,
    sprc: bool,
) {
    let mut pool: Vec<MsId> = (1..request.microservices.len()).collect();
    let mut placed = 0;
    while placed < request.backup_limit && !pool.is_empty() {
        let mut pick = 0;
        for (i, &m) in pool.iter().enumerate() {
            if state.latest_sigma(m).unwrap_or(1.0) < state.latest_sigma(pool[pick]).unwrap_or(1.0) {
                pick = i;
            }
        }
        if place_one(net, request, state, pool[pick], cfg, ctx, sprc) {
            placed += 1;
        } else {
            pool.remove(pick);
        }
    }
}

/// Commits the best-scoring candidate node for a new instance of `m` that
/// still fits. Scores of zero are never chosen; ties go to the lowest node
/// index. Candidates are evaluated lazily, best upper bound first, since a
/// score never exceeds the node's own factor.
pub(crate) fn place_one(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    m: MsId,
    cfg: &PlacementConfig,
    ctx: PlacementContext<'_>,
    sprc: bool,
) -> bool {
    let scorer = Scorer::new(net, request, state, m, cfg, ctx, sprc);
    let mut pending: Vec<(f64, NodeId)> = candidate_nodes(net, request, state, m, cfg)
        .into_iter()
        .map(|n| (scorer.bound(n), n))
        .collect();
    // Best bound last so `pop` takes it.
    pending.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut scored: Vec<(f64, CandidatePlan)> = Vec::new();
    let mut chosen = Vec::new();
    loop {
        let best = scored
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.1 .1.node.cmp(&a.1 .1.node)))
            .map(|(i, (s, p))| (i, *s, p.node));
        let settled = match (best, pending.last()) {
            (Some((_, s, n)), Some(&(bound, u))) => s > bound || (s == bound && n < u),
            (Some(_), None) => true,
            (None, None) => break,
            (None, Some(_)) => false,
        };
        if settled {
            let (i, _, _) = best.expect("settled implies a scored candidate");
            chosen.push(scored.swap_remove(i).1);
            break;
        }
        let (_, n) = pending.pop().expect("unsettled implies a pending candidate");
        if let Some((score, plan)) = scorer.evaluate(n) {
            if score > 0.0 {
                scored.push((score, plan));
            }
        }
    }
    // Commit failures are rare; fall back to the full ranking.
    if let Some(plan) = chosen.pop() {
        if commit(net, request, state, m, plan) {
            return true;
        }
    } else {
        return false;
    }
    let mut ranked = score_candidates(net, request, state, m, cfg, ctx, sprc);
    ranked.retain(|(s, _)| *s > 0.0);
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked
        .into_iter()
        .any(|(_, plan)| commit(net, request, state, m, plan))
}

/// Candidate evaluation for one microservice against a fixed snapshot.
struct Scorer<'a> {
    net: &'a InfrastructureNetwork,
    request: &'a ServiceRequest,
    state: &'a PlacementState,
    m: MsId,
    policy: RoutePolicy,
    node_rel: Vec<f64>,
    critical: BTreeSet<NodeId>,
    contention: Option<Contention<'a>>,
}

impl<'a> Scorer<'a> {
    fn new(
        net: &'a InfrastructureNetwork,
        request: &'a ServiceRequest,
        state: &'a PlacementState,
        m: MsId,
        cfg: &PlacementConfig,
        ctx: PlacementContext<'a>,
        sprc: bool,
    ) -> Self {
        let contention = (sprc && state.mechanism == Mechanism::Shared).then(|| Contention {
            index: ctx.shared,
            local: shared_uses(request, state),
            literal: cfg.sprc_literal,
        });
        Self {
            net,
            request,
            state,
            m,
            policy: RoutePolicy::Disjoint { k: cfg.max_path_len },
            node_rel: net.node_reliabilities(),
            critical: critical_nodes(state),
            contention,
        }
    }

    /// The node factor: post-placement reliability, or its ratio to the
    /// current one on a node that is already critical.
    fn bound(&self, n: NodeId) -> f64 {
        let after = self.net.node_reliability_after(n, self.request.microservices[self.m].cpu_demand);
        if self.critical.contains(&n) && self.node_rel[n] > 0.0 {
            after / self.node_rel[n]
        } else {
            after
        }
    }

    fn path_rel(&self, lp: &LinkPlan) -> f64 {
        let bw = self.request.links[lp.key.link].bw_demand;
        match &self.contention {
            _ if lp.paths.is_empty() => 1.0,
            Some(c) if !lp.key.is_primary() => c.path_set_reliability(self.net, &self.node_rel, &lp.paths, bw),
            _ => path_set_reliability(self.net, &self.node_rel, &lp.paths, &BTreeSet::new()),
        }
    }

    fn evaluate(&self, n: NodeId) -> Option<(f64, CandidatePlan)> {
        let plan = plan_candidate(self.net, self.request, self.state, self.m, n, self.policy)?;
        let mut r_f = 1.0;
        for (_, plans) in &plan.parents {
            let q: f64 = plans
                .iter()
                .map(|lp| 1.0 - self.request.links[lp.key.link].reliability() * self.path_rel(lp))
                .product();
            r_f *= 1.0 - q;
        }
        Some((r_f * self.bound(n), plan))
    }
}

/// Candidate plans for a new instance of `m` with their scores, in node order.
pub fn score_candidates(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    m: MsId,
    cfg: &PlacementConfig,
    ctx: PlacementContext<'_>,
    sprc: bool,
) -> Vec<(f64, CandidatePlan)> {
    let scorer = Scorer::new(net, request, state, m, cfg, ctx, sprc);
    candidate_nodes(net, request, state, m, cfg)
        .into_iter()
        .filter_map(|n| scorer.evaluate(n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{place_request, Algorithm, PlacementOutcome};
    use crate::topology::fixtures::{graph, link, node};
    use crate::topology::InfrastructureNetwork;
    use crate::workload::{Microservice, MicroserviceLink};

    fn ms(id: usize, cpu: f64) -> Microservice {
        Microservice {
            id,
            cpu_demand: cpu,
            proc_latency: 10.0,
            failure_rate: 0.0,
        }
    }

    fn ml(parent: usize, child: usize, bw: f64) -> MicroserviceLink {
        MicroserviceLink {
            parent,
            child,
            bw_demand: bw,
            data_volume: 0.0,
            deadline: 10.0,
            failure_rate: 0.0,
        }
    }

    fn request(cpus: &[f64], edges: &[(usize, usize)], backups: usize, access: usize) -> ServiceRequest {
        let mut microservices = vec![Microservice::access()];
        microservices.extend(cpus.iter().enumerate().map(|(i, &c)| ms(i + 1, c)));
        ServiceRequest {
            id: 0,
            microservices,
            links: edges.iter().map(|&(p, c)| ml(p, c, 1.0)).collect(),
            backup_limit: backups,
            lifetime: 10,
            arrival_time: 0.0,
            access_node: access,
        }
    }

    fn srp(net: &mut InfrastructureNetwork, req: &ServiceRequest) -> PlacementOutcome {
        place_request(net, req, &PlacementConfig::default(), PlacementContext::default())
    }

    fn two_node(rel0: f64, rel1: f64) -> InfrastructureNetwork {
        let mut net = graph(2, &[(0, 1)], 0.99, 0.0);
        net.nodes[0] = node(0, 16.0, rel0);
        net.nodes[1] = node(1, 16.0, rel1);
        net
    }

    #[test]
    fn single_microservice_goes_to_best_score() {
        let mut net = two_node(0.95, 0.999);
        net.links[0].failure_rate = 0.001;
        let req = request(&[1.0], &[(0, 1)], 0, 0);
        // On the access node the parent link is co-located but the node is
        // already critical, so the score is r'/r = 1. Remotely it is
        // e^{-0.001} * 0.999.
        let local = 1.0;
        let remote = (-0.001f64).exp() * 0.999;
        let expect = if remote > local { 1 } else { 0 };
        let out = srp(&mut net, &req);
        assert!(out.success);
        assert_eq!(out.state.instances[1], vec![expect]);
    }

    #[test]
    fn zero_cpu_everywhere_fails_cleanly() {
        let mut net = graph(3, &[(0, 1), (1, 2)], 0.99, 0.0);
        for n in &mut net.nodes {
            n.cpu_capacity = 0.0;
        }
        let before = net.clone();
        let req = request(&[1.0, 1.0], &[(0, 1), (1, 2)], 1, 0);
        let out = srp(&mut net, &req);
        assert!(!out.success);
        assert_eq!(net, before);
    }

    #[test]
    fn loaded_node_loses_to_unloaded_twin() {
        let mut net = graph(3, &[(0, 1), (0, 2)], 0.99, 0.0);
        for n in 1..3 {
            net.nodes[n].rel_low = 0.999;
            net.nodes[n].rel_high = 0.99;
            net.nodes[n].load_threshold = 0.5;
        }
        // Node 1 starts past the threshold; node 0 cannot host.
        net.nodes[0].cpu_capacity = 0.0;
        net.allocate_cpu(1, 9.0).unwrap();
        let req = request(&[1.0], &[(0, 1)], 0, 0);
        let out = srp(&mut net, &req);
        assert_eq!(out.state.instances[1], vec![2]);
    }

    #[test]
    fn blacklisted_best_node_yields_second_best() {
        let mut net = graph(3, &[(0, 1), (0, 2)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 0.0;
        net.nodes[1].rel_low = 0.9999;
        net.nodes[1].rel_high = 0.9999;
        let req = request(&[1.0], &[(0, 1)], 0, 0);
        let mut state = PlacementState::new(&req, Mechanism::FullyProtected);
        let cfg = PlacementConfig::default();
        assert!(place_one(&mut net, &req, &mut state, 1, &cfg, PlacementContext::default(), false));
        assert_eq!(state.instances[1], vec![1]);
        state.release_all(&mut net, &req);
        state.blacklist[1].insert(1);
        assert!(place_one(&mut net, &req, &mut state, 1, &cfg, PlacementContext::default(), false));
        assert_eq!(state.instances[1], vec![2]);
    }

    /// Diamond 0-{1,2}-3 plus a pendant 4 hung off node 1: node 3 reaches the
    /// access node over two disjoint paths, node 4 over one.
    #[test]
    fn two_disjoint_paths_beat_one() {
        let mut net = graph(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)], 0.99, 0.0);
        for n in [0, 1, 2] {
            net.nodes[n].cpu_capacity = 0.0;
        }
        let req = request(&[1.0], &[(0, 1)], 0, 0);
        let cfg = PlacementConfig::default();
        let state = PlacementState::new(&req, Mechanism::FullyProtected);
        let scores = score_candidates(&net, &req, &state, 1, &cfg, PlacementContext::default(), false);
        let s3 = scores.iter().find(|(_, p)| p.node == 3).unwrap().0;
        let s4 = scores.iter().find(|(_, p)| p.node == 4).unwrap().0;
        let r = 0.99;
        assert!((s3 - (1.0 - (1.0 - r) * (1.0 - r)) * r).abs() < 1e-12);
        assert!((s4 - r * r).abs() < 1e-12);
        let out = srp(&mut net, &req);
        assert_eq!(out.state.instances[1], vec![3]);
    }

    /// Chain 0-1-2-3 with node 4 hung off node 1. The parent prefers the more
    /// reliable node 4, from which the child's only host is out of hop range,
    /// so the parent is blacklisted off node 4 and re-placed on node 2.
    #[test]
    fn failed_child_backtracks_parent() {
        let mut net = InfrastructureNetwork::new(
            vec![
                node(0, 0.0, 0.99),
                node(1, 0.0, 0.99),
                node(2, 16.0, 0.99),
                node(3, 16.0, 0.99),
                node(4, 16.0, 0.999),
            ],
            vec![link(0, 1, 100.0, 0.0), link(1, 2, 100.0, 0.0), link(2, 3, 100.0, 0.0), link(1, 4, 100.0, 0.0)],
        )
        .unwrap();
        // The child only fits on node 3, three hops from node 4.
        let req = request(&[1.0, 12.0], &[(0, 1), (1, 2)], 0, 0);
        net.nodes[2].cpu_capacity = 1.0;
        net.nodes[4].cpu_capacity = 1.0;
        let cfg = PlacementConfig {
            max_path_len: 2,
            ..Default::default()
        };
        let out = place_request(&mut net, &req, &cfg, PlacementContext::default());
        assert!(out.success, "{:?}", out.state);
        assert_eq!(out.state.backtracks, 1);
        assert!(out.state.blacklist[1].contains(&4));
        assert_eq!(out.state.instances[1], vec![2]);
        assert_eq!(out.state.instances[2], vec![3]);
    }

    #[test]
    fn no_backups_when_limit_zero() {
        let mut net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.99, 0.0);
        let req = request(&[1.0, 1.0], &[(0, 1), (1, 2)], 0, 0);
        let out = srp(&mut net, &req);
        assert!(out.success);
        assert_eq!(out.state.backup_count(), 0);
    }

    #[test]
    fn backup_goes_to_weakest_microservice() {
        let mut net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.99, 0.0);
        let req = request(&[1.0, 1.0], &[(0, 1), (0, 2)], 1, 0);
        let cfg = PlacementConfig::default();
        let mut state = PlacementState::new(&req, Mechanism::FullyProtected);
        let ctx = PlacementContext::default();
        assert!(place_one(&mut net, &req, &mut state, 1, &cfg, ctx, false));
        assert!(place_one(&mut net, &req, &mut state, 2, &cfg, ctx, false));
        state.recorded_sigma[1][0] = 0.99;
        state.recorded_sigma[2][0] = 0.9;
        place_backups(&mut net, &req, &mut state, &cfg, ctx, false);
        assert_eq!(state.instances[2].len(), 2);
        assert_eq!(state.instances[1].len(), 1);
    }

    #[test]
    fn infeasible_backup_falls_through_to_next() {
        // Microservice 2 fills its node; anti-affinity and CPU leave no room
        // for its backup, so the backup goes to microservice 1.
        let mut net = graph(3, &[(0, 1), (1, 2), (2, 0)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 2.0;
        net.nodes[1].cpu_capacity = 1.0;
        net.nodes[2].cpu_capacity = 1.0;
        let req = request(&[1.0, 2.0], &[(0, 1), (0, 2)], 1, 0);
        let cfg = PlacementConfig::default();
        let ctx = PlacementContext::default();
        let mut state = PlacementState::new(&req, Mechanism::FullyProtected);
        assert!(place_one(&mut net, &req, &mut state, 2, &cfg, ctx, false));
        assert!(place_one(&mut net, &req, &mut state, 1, &cfg, ctx, false));
        state.recorded_sigma[1][0] = 0.99;
        state.recorded_sigma[2][0] = 0.9;
        place_backups(&mut net, &req, &mut state, &cfg, ctx, false);
        assert_eq!(state.instances[2].len(), 1);
        assert_eq!(state.instances[1].len(), 2);
    }

    #[test]
    fn srp_s_matches_srp_without_backups() {
        let net0 = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)], 0.99, 0.001);
        let req = request(&[1.0, 2.0, 1.5], &[(0, 1), (1, 2), (1, 3)], 0, 0);
        let mut a = net0.clone();
        let mut b = net0.clone();
        let base = PlacementConfig::default();
        let shared = PlacementConfig {
            algorithm: Algorithm::SrpS,
            mechanism: Mechanism::Shared,
            ..Default::default()
        };
        let x = place_request(&mut a, &req, &base, PlacementContext::default());
        let y = place_request(&mut b, &req, &shared, PlacementContext::default());
        assert_eq!(x.state.instances, y.state.instances);
    }

    #[test]
    fn tiny_shared_pool_drops_backup_links() {
        let mut net = graph(3, &[(0, 1), (1, 2), (2, 0)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 0.0;
        net.shared_ratio = 0.005;
        let req = request(&[1.0], &[(0, 1)], 1, 0);
        let cfg = PlacementConfig {
            algorithm: Algorithm::SrpS,
            mechanism: Mechanism::Shared,
            ..Default::default()
        };
        let out = place_request(&mut net, &req, &cfg, PlacementContext::default());
        assert!(out.success);
        assert_eq!(out.state.backup_count(), 0);
        for key in out.state.routes.keys() {
            assert!(key.is_primary());
        }
    }
}
