//! Independent checks of placement constraints and resource ledgers.

use std::fmt;

use crate::placement::{Mechanism, PlacementState};
use crate::topology::{InfrastructureNetwork, Pool, LEDGER_EPS};
use crate::workload::ServiceRequest;

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A pool's reservations on an edge exceed its limit.
    Bandwidth { link: usize, pool: Pool, used: f64, limit: f64 },
    Cpu { node: usize, used: f64, capacity: f64 },
    /// An instance is missing, or a primary has no node.
    Assignment { request: usize, microservice: usize },
    /// A path does not join the two instance nodes or is not a walk in the
    /// network.
    Path { request: usize, link: usize },
    Latency { request: usize, link: usize, latency: f64, deadline: f64 },
    BackupLimit { request: usize, backups: usize, limit: usize },
    BackupBound { request: usize, limit: usize, microservices: usize },
    /// A link reserved from the wrong pool for its kind.
    Pool { request: usize, link: usize },
    /// A ledger differs from the sum over active placements.
    Ledger { what: &'static str, index: usize, ledger: f64, placements: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Constraints that concern a single placement: one node per instance,
/// path validity, latency, backup limits and pool choice.
pub fn audit_placement(net: &InfrastructureNetwork, request: &ServiceRequest, state: &PlacementState) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = request.id;
    for (m, nodes) in state.instances.iter().enumerate() {
        let bad_count = if m == 0 { nodes.len() != 1 } else { nodes.is_empty() };
        if bad_count || nodes.iter().any(|&n| n >= net.node_count()) {
            out.push(Violation::Assignment { request: id, microservice: m });
        }
    }
    if state.instances[0].first() != Some(&request.access_node) {
        out.push(Violation::Assignment { request: id, microservice: 0 });
    }
    for (key, route) in &state.routes {
        let link = &request.links[key.link];
        let (Some(cn), Some(pn)) = (state.node_of(link.child, key.child_index), state.node_of(link.parent, key.parent_index)) else {
            out.push(Violation::Path { request: id, link: key.link });
            continue;
        };
        let expected_pool = match state.mechanism {
            Mechanism::Shared if !key.is_primary() => Pool::Shared,
            _ => Pool::Protected,
        };
        if route.pool != expected_pool || (route.bw - link.bw_demand).abs() > TOL {
            out.push(Violation::Pool { request: id, link: key.link });
        }
        if route.colocated() != (cn == pn) {
            out.push(Violation::Path { request: id, link: key.link });
        }
        let fixed = link.transmission_latency() + request.microservices[link.child].proc_latency / 1000.0;
        if route.colocated() && fixed > link.deadline + TOL {
            out.push(Violation::Latency { request: id, link: key.link, latency: fixed, deadline: link.deadline });
        }
        for p in &route.paths {
            let walk_ok = p.nodes.len() == p.edges.len() + 1
                && p.edges.iter().enumerate().all(|(i, &e)| {
                    e < net.links.len() && {
                        let (u, v) = net.links[e].endpoints;
                        (u, v) == (p.nodes[i], p.nodes[i + 1]) || (v, u) == (p.nodes[i], p.nodes[i + 1])
                    }
                });
            if !walk_ok || !p.is_simple() || p.source() != cn || p.target() != pn {
                out.push(Violation::Path { request: id, link: key.link });
                continue;
            }
            let latency = fixed + p.latency_ms(net) / 1000.0;
            if latency > link.deadline + TOL {
                out.push(Violation::Latency { request: id, link: key.link, latency, deadline: link.deadline });
            }
        }
    }
    let backups = state.backup_count();
    if backups > request.backup_limit {
        out.push(Violation::BackupLimit { request: id, backups, limit: request.backup_limit });
    }
    if request.backup_limit > request.real_count() {
        out.push(Violation::BackupBound {
            request: id,
            limit: request.backup_limit,
            microservices: request.real_count(),
        });
    }
    out
}

/// Capacity constraints on every node and edge, and agreement between the
/// ledgers and the placements that are supposed to account for them.
pub fn audit_network<'a>(
    net: &InfrastructureNetwork,
    active: impl IntoIterator<Item = (&'a ServiceRequest, &'a PlacementState)>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut cpu = vec![0.0; net.node_count()];
    let mut prot = vec![0.0; net.links.len()];
    let mut shared = vec![0.0; net.links.len()];
    for (req, state) in active {
        for (m, nodes) in state.instances.iter().enumerate().skip(1) {
            for &n in nodes {
                cpu[n] += req.microservices[m].cpu_demand;
            }
        }
        for route in state.routes.values() {
            let ledger = if route.pool == Pool::Protected { &mut prot } else { &mut shared };
            for p in &route.paths {
                for &e in &p.edges {
                    ledger[e] += route.bw;
                }
            }
        }
    }
    for (i, n) in net.nodes.iter().enumerate() {
        if n.cpu_allocated > n.cpu_capacity + LEDGER_EPS {
            out.push(Violation::Cpu { node: i, used: n.cpu_allocated, capacity: n.cpu_capacity });
        }
        if (n.cpu_allocated - cpu[i]).abs() > TOL {
            out.push(Violation::Ledger { what: "cpu", index: i, ledger: n.cpu_allocated, placements: cpu[i] });
        }
    }
    for (e, l) in net.links.iter().enumerate() {
        for (pool, used, sum) in [(Pool::Protected, l.bw_protected, prot[e]), (Pool::Shared, l.bw_shared, shared[e])] {
            let limit = net.pool_limit(e, pool);
            if used > limit + LEDGER_EPS {
                out.push(Violation::Bandwidth { link: e, pool, used, limit });
            }
            if (used - sum).abs() > TOL {
                out.push(Violation::Ledger {
                    what: if pool == Pool::Protected { "protected" } else { "shared" },
                    index: e,
                    ledger: used,
                    placements: sum,
                });
            }
        }
    }
    out
}
