//! Self-check suites run by `msplace validate`: operator identities, the
//! reliability matrix against brute-force enumeration, the analytic model
//! against Monte Carlo failure sampling, constraint audits and backup
//! monotonicity.

use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::audit::{audit_network, audit_placement};
use crate::pathfinding::{find_idps, Path, PathQuery};
use crate::placement::{place_request, Algorithm, Mechanism, PlacementConfig, PlacementContext, PlacementState, Route, RouteKey};
use crate::relcore::{
    critical_nodes, microservice_reliability, network_reliability_matrix, op_minus, op_plus, op_times,
    service_reliability_with, ModelOptions, RelValue,
};
use crate::rng::{derive_seed, rng_from};
use crate::simulator::{evaluate_service_alive, sample_failures};
use crate::topology::{
    generate_er_topology, select_access_nodes, InfrastructureNetwork, NodeId, PhysicalLink, PhysicalNode, Pool,
    TopologyRanges,
};
use crate::workload::{generate_request, generate_workload, ServiceRequest, WorkloadRanges};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// The suite's headline measurement (an error, a count, ...).
    pub measured: f64,
    pub detail: String,
}

/// `⊕` commutativity and associativity, `(a ⊕ b) ⊖ b = a`, and `⊗` of
/// overlapping paths.
pub fn algebra_suite(triples: usize, seed: u64) -> SuiteReport {
    let mut rng = rng_from(seed, &[0xa1]);
    let mut worst: f64 = 0.0;
    for _ in 0..triples {
        let a = RelValue::scalar(rng.random());
        let b = RelValue::scalar(rng.random());
        let c = RelValue::scalar(rng.random());
        worst = worst.max((op_plus(&a, &b).value() - op_plus(&b, &a).value()).abs());
        let left = op_plus(&op_plus(&a, &b), &c).value();
        let right = op_plus(&a, &op_plus(&b, &c)).value();
        worst = worst.max((left - right).abs());
        if a.value() > 0.0 {
            match op_minus(&op_plus(&a, &b), b.value()) {
                Ok(v) => worst = worst.max((v.value() - a.value()).abs()),
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    let p = Path::new(vec![0, 1, 2], vec![0, 1]);
    let q = Path::new(vec![2, 1, 3], vec![1, 2]);
    let overlap = op_times(&RelValue::from_path(p.clone(), 0.9), &RelValue::from_path(q, 0.8)).value();
    let sum = op_plus(&RelValue::from_path(p, 0.9), &RelValue::scalar(0.0)).value();
    let passed = worst < 1e-12 && overlap == 0.0 && (sum - 0.9).abs() < 1e-15;
    SuiteReport {
        name: "operator-algebra",
        passed,
        measured: worst,
        detail: format!("{triples} triples, max identity error {worst:.3e}, overlapping product {overlap}"),
    }
}

/// Random graph on `n <= 7` nodes with edge probability `p`.
fn small_graph(n: usize, p: f64, rng: &mut impl Rng) -> InfrastructureNetwork {
    let nodes = (0..n)
        .map(|id| {
            let r = rng.random_range(0.9..1.0);
            PhysicalNode {
                id,
                cpu_capacity: 16.0,
                cpu_allocated: 0.0,
                load_threshold: 0.5,
                rel_low: r,
                rel_high: r,
            }
        })
        .collect();
    let mut links = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                links.push(PhysicalLink {
                    endpoints: (u, v),
                    bw_capacity: 100.0,
                    bw_protected: 0.0,
                    bw_shared: 0.0,
                    prop_delay: 1.0,
                    failure_rate: rng.random_range(0.0..0.1),
                });
            }
        }
    }
    InfrastructureNetwork::new(nodes, links).expect("generated graph is valid")
}

/// All simple paths from `src` to `dst` with at most `k` hops, by DFS.
fn enumerate_paths(net: &InfrastructureNetwork, src: NodeId, dst: NodeId, k: usize) -> Vec<(Vec<NodeId>, Vec<usize>)> {
    fn go(
        net: &InfrastructureNetwork,
        dst: NodeId,
        k: usize,
        nodes: &mut Vec<NodeId>,
        edges: &mut Vec<usize>,
        out: &mut Vec<(Vec<NodeId>, Vec<usize>)>,
    ) {
        let at = *nodes.last().expect("path has a source");
        if at == dst {
            out.push((nodes.clone(), edges.clone()));
            return;
        }
        if edges.len() == k {
            return;
        }
        for &e in &net.adjacency[at] {
            let next = net.links[e].other_end(at);
            if nodes.contains(&next) {
                continue;
            }
            nodes.push(next);
            edges.push(e);
            go(net, dst, k, nodes, edges, out);
            nodes.pop();
            edges.pop();
        }
    }
    let mut out = Vec::new();
    go(net, dst, k, &mut vec![src], &mut Vec::new(), &mut out);
    out
}

/// Reliability between two nodes from the greedy family of internally
/// disjoint paths taken shortest first, then lexicographically.
fn brute_force_entry(net: &InfrastructureNetwork, src: NodeId, dst: NodeId, k: usize) -> f64 {
    if src == dst {
        return 1.0;
    }
    let mut paths = enumerate_paths(net, src, dst, k);
    paths.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| a.0.cmp(&b.0)));
    let mut used_nodes: BTreeSet<NodeId> = BTreeSet::new();
    let mut used_edges: BTreeSet<usize> = BTreeSet::new();
    let mut q = 1.0;
    for (nodes, edges) in paths {
        let interior = &nodes[1..nodes.len() - 1];
        if interior.iter().any(|n| used_nodes.contains(n)) || edges.iter().any(|e| used_edges.contains(e)) {
            continue;
        }
        used_nodes.extend(interior.iter().copied());
        used_edges.extend(edges.iter().copied());
        let r: f64 = interior.iter().map(|&n| net.node_reliability(n)).product::<f64>()
            * edges.iter().map(|&e| net.link_reliability(e)).product::<f64>();
        q *= 1.0 - r;
    }
    1.0 - q
}

/// The network reliability matrix against brute-force path enumeration on
/// random graphs of up to seven nodes.
pub fn matrix_suite(graphs: usize, seed: u64) -> SuiteReport {
    let mut rng = rng_from(seed, &[0xb2]);
    let mut worst: f64 = 0.0;
    for _ in 0..graphs {
        let n = rng.random_range(2..=7);
        let p = rng.random_range(0.2..0.9);
        let k = rng.random_range(1..=4);
        let net = small_graph(n, p, &mut rng);
        let m = network_reliability_matrix(&net, k, None);
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((m.value(i, j) - brute_force_entry(&net, i, j, k)).abs());
            }
        }
    }
    SuiteReport {
        name: "matrix-vs-brute-force",
        passed: worst < 1e-12,
        measured: worst,
        detail: format!("{graphs} graphs, max entry deviation {worst:.3e}"),
    }
}

/// A small placed service at default generator parameters, loads frozen
/// after placement.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub net: InfrastructureNetwork,
    pub request: ServiceRequest,
    pub state: PlacementState,
}

/// Up to five nodes, up to three microservices, at most one backup each.
pub fn model_fixtures(count: usize, seed: u64) -> Vec<Fixture> {
    let mut out = Vec::new();
    let mut attempt = 0u64;
    while out.len() < count {
        attempt += 1;
        let mut rng = rng_from(seed, &[0xc3, attempt]);
        let n = rng.random_range(3..=5);
        let Ok(mut net) = generate_er_topology(n, 0.7, &TopologyRanges::default(), rng.random()) else {
            continue;
        };
        net.access_nodes = select_access_nodes(&net, 0.2);
        let wl = WorkloadRanges {
            microservice_count: (1, 3),
            ..Default::default()
        };
        let Ok(mut request) = generate_request(&wl, &net.access_nodes, &mut rng) else {
            continue;
        };
        request.backup_limit = rng.random_range(0..=request.real_count());
        let algorithm = if attempt % 2 == 0 { Algorithm::Srp } else { Algorithm::Daip };
        let cfg = PlacementConfig {
            algorithm,
            ..Default::default()
        };
        let outcome = place_request(&mut net, &request, &cfg, PlacementContext::default());
        if outcome.success {
            out.push(Fixture {
                net,
                request,
                state: outcome.state,
            });
        }
    }
    out
}

/// Analytic service reliability against the per-step survival frequency
/// of the fault-injection engine. A fixture agrees when the frequency lies
/// within three binomial standard deviations; the suite passes when at
/// least 95% agree. `bias` scales every instance reliability by `1 - bias`
/// in the analytic model only.
pub fn monte_carlo_suite(fixtures: usize, samples: u64, bias: f64, seed: u64) -> SuiteReport {
    let mut agree = 0;
    let mut worst_z: f64 = 0.0;
    let fx = model_fixtures(fixtures, seed);
    for (i, f) in fx.iter().enumerate() {
        let r = service_reliability_with(
            &f.net,
            &f.request,
            &f.state,
            &f.net.node_reliabilities(),
            ModelOptions { instance_bias: bias },
        )
        .expect("fixture is fully placed");
        let fail_seed = derive_seed(seed, &[0xd4, i as u64]);
        let alive = (0..samples)
            .filter(|&t| {
                let s = sample_failures(&f.net, [(&f.request, &f.state)], fail_seed, t);
                evaluate_service_alive(&f.request, &f.state, &s, None)
            })
            .count() as f64;
        let freq = alive / samples as f64;
        let sd = (r * (1.0 - r) / samples as f64).sqrt().max(1e-12);
        let z = (freq - r).abs() / sd;
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            agree += 1;
        }
    }
    let need = (fixtures * 19).div_ceil(20);
    SuiteReport {
        name: "analytic-vs-monte-carlo",
        passed: agree >= need,
        measured: agree as f64,
        detail: format!("{agree}/{fixtures} placements within 3 sd ({samples} samples each, worst z {worst_z:.2})"),
    }
}

/// Fuzzed request streams under every algorithm and both mechanisms, with
/// random departures, audited after every placement.
pub fn audit_suite(placements: usize, seed: u64) -> SuiteReport {
    let mut violations = Vec::new();
    let mut audited = 0;
    let mut round = 0u64;
    while audited < placements {
        round += 1;
        let mut rng = rng_from(seed, &[0xe5, round]);
        let n = rng.random_range(6..=14);
        let Ok(mut net) = generate_er_topology(n, rng.random_range(0.2..0.6), &TopologyRanges::default(), rng.random())
        else {
            continue;
        };
        net.shared_ratio = rng.random_range(0.05..1.0);
        net.access_nodes = select_access_nodes(&net, 0.2);
        let ranges = WorkloadRanges {
            cpu_scale: rng.random_range(1.0..8.0),
            bw_scale: rng.random_range(1.0..40.0),
            backup_mode: crate::workload::BackupMode::Random,
            ..Default::default()
        };
        let Ok(reqs) = generate_workload(40, 1.0, &ranges, &net.access_nodes, rng.random()) else {
            continue;
        };
        let cfg = PlacementConfig {
            algorithm: Algorithm::ALL[rng.random_range(0..6)],
            mechanism: if rng.random() { Mechanism::Shared } else { Mechanism::FullyProtected },
            ..Default::default()
        };
        let mut index = crate::placement::SharedIndex::new(net.links.len());
        let mut active: Vec<(usize, PlacementState)> = Vec::new();
        for (i, r) in reqs.iter().enumerate() {
            if !active.is_empty() && rng.random::<f64>() < 0.4 {
                let (j, mut s) = active.remove(rng.random_range(0..active.len()));
                s.release_all(&mut net, &reqs[j]);
                index.remove(s.request_id);
            }
            let ctx = PlacementContext {
                shared: Some(&index),
                seed: round,
            };
            let out = place_request(&mut net, r, &cfg, ctx);
            audited += 1;
            if out.success {
                violations.extend(audit_placement(&net, r, &out.state));
                index.insert(r, &out.state);
                active.push((i, out.state));
            }
            violations.extend(audit_network(&net, active.iter().map(|(j, s)| (&reqs[*j], s))));
        }
        for (j, mut s) in active.drain(..) {
            s.release_all(&mut net, &reqs[j]);
        }
        violations.extend(audit_network(&net, []));
    }
    SuiteReport {
        name: "constraint-audit",
        passed: violations.is_empty(),
        measured: violations.len() as f64,
        detail: match violations.first() {
            None => format!("{audited} placements, no violations"),
            Some(v) => format!("{audited} placements, {} violations, first: {v}", violations.len()),
        },
    }
}

/// One randomized backup-monotonicity case: the microservice reliability
/// before and after adding one backup instance, with critical nodes and
/// node reliabilities frozen at their values before the backup.
pub fn backup_monotonicity_case(seed: u64) -> Option<(f64, f64)> {
    let mut rng = rng_from(seed, &[0xf6]);
    let fx = model_fixtures(1, rng.random()).pop()?;
    let Fixture { net, request, mut state } = fx;
    let m = rng.random_range(1..request.microservices.len());
    let node: NodeId = rng.random_range(0..net.node_count());
    let node_rel = net.node_reliabilities();
    let critical = critical_nodes(&state);
    let opts = ModelOptions::default();
    let before = microservice_reliability(&net, &request, &state, &node_rel, &critical, m, opts).ok()?;
    let b = state.instances[m].len();
    state.instances[m].push(node);
    for (li, link) in request.links.iter().enumerate() {
        if link.child != m {
            continue;
        }
        for (pb, &pn) in state.instances[link.parent].iter().enumerate() {
            let paths = if pn == node {
                Vec::new()
            } else {
                let q = PathQuery {
                    src: node,
                    dst: pn,
                    max_len: 4,
                    bw_required: 0.0,
                    pool: Pool::Protected,
                    latency_budget: None,
                };
                let found = find_idps(&net, &q);
                if found.is_empty() {
                    continue;
                }
                found
            };
            let key = RouteKey {
                link: li,
                child_index: b,
                parent_index: pb,
            };
            state.routes.insert(key, Route { paths, pool: Pool::Protected, bw: link.bw_demand });
        }
    }
    let after = microservice_reliability(&net, &request, &state, &node_rel, &critical, m, opts).ok()?;
    Some((before, after))
}

pub fn monotonicity_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut worst: f64 = 0.0;
    let mut run = 0;
    for i in 0..cases as u64 {
        if let Some((before, after)) = backup_monotonicity_case(derive_seed(seed, &[i])) {
            worst = worst.max(before - after);
            run += 1;
        }
    }
    SuiteReport {
        name: "backup-monotonicity",
        passed: worst <= 1e-12,
        measured: worst,
        detail: format!("{run} cases, largest decrease {worst:.3e}"),
    }
}

/// Sizes of each suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPlan {
    pub triples: usize,
    pub graphs: usize,
    pub fixtures: usize,
    pub samples: u64,
    pub bias: f64,
    pub placements: usize,
    pub monotonicity_cases: usize,
    pub seed: u64,
}

impl Default for ValidationPlan {
    fn default() -> Self {
        Self {
            triples: 100_000,
            graphs: 200,
            fixtures: 20,
            samples: 100_000,
            bias: 0.0,
            placements: 10_000,
            monotonicity_cases: 1_000,
            seed: 2024,
        }
    }
}

pub fn run_all(plan: &ValidationPlan) -> Vec<SuiteReport> {
    vec![
        algebra_suite(plan.triples, plan.seed),
        matrix_suite(plan.graphs, plan.seed),
        monte_carlo_suite(plan.fixtures, plan.samples, plan.bias, plan.seed),
        audit_suite(plan.placements, plan.seed),
        monotonicity_suite(plan.monotonicity_cases, plan.seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        assert!(algebra_suite(2_000, 1).passed);
        assert!(matrix_suite(20, 1).passed);
        assert!(monotonicity_suite(50, 1).passed);
        let a = audit_suite(200, 1);
        assert!(a.passed, "{}", a.detail);
    }

    #[test]
    fn brute_force_triangle() {
        let nodes = (0..3)
            .map(|id| PhysicalNode {
                id,
                cpu_capacity: 1.0,
                cpu_allocated: 0.0,
                load_threshold: 0.5,
                rel_low: 0.99,
                rel_high: 0.99,
            })
            .collect();
        let rate = -(0.999f64).ln();
        let links = [(0, 1), (1, 2), (0, 2)]
            .into_iter()
            .map(|endpoints| PhysicalLink {
                endpoints,
                bw_capacity: 1.0,
                bw_protected: 0.0,
                bw_shared: 0.0,
                prop_delay: 1.0,
                failure_rate: rate,
            })
            .collect();
        let net = InfrastructureNetwork::new(nodes, links).unwrap();
        let expect = 1.0 - (1.0 - 0.999) * (1.0 - 0.99 * 0.999 * 0.999);
        assert!((brute_force_entry(&net, 0, 1, 2) - expect).abs() < 1e-15);
    }

    #[test]
    fn bias_is_detected() {
        let r = monte_carlo_suite(4, 20_000, 0.01, 3);
        assert!(!r.passed, "{}", r.detail);
    }
}
