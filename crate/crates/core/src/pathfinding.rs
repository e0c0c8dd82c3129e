//! Internally disjoint path search between node pairs.
//!
//! Disjointness comes from max-flow on the node-split graph (every vertex
//! other than the two terminals gets unit capacity). Only links with enough
//! residual bandwidth in the requested pool take part. Paths longer than the
//! hop bound or over the latency budget are dropped after decomposition, then
//! the set is topped up with hop-bounded fastest paths through the remaining
//! free nodes until none is left.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::topology::{InfrastructureNetwork, LinkId, NodeId, Pool, LEDGER_EPS};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<LinkId>,
}

impl Path {
    pub fn new(nodes: Vec<NodeId>, edges: Vec<LinkId>) -> Self {
        debug_assert_eq!(nodes.len(), edges.len() + 1);
        Self { nodes, edges }
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("path has nodes")
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    /// Nodes strictly between the endpoints.
    pub fn interior(&self) -> &[NodeId] {
        if self.nodes.len() <= 2 {
            &[]
        } else {
            &self.nodes[1..self.nodes.len() - 1]
        }
    }

    pub fn latency_ms(&self, net: &InfrastructureNetwork) -> f64 {
        self.edges.iter().map(|&e| net.links[e].prop_delay).sum()
    }

    /// Product of interior node and edge reliabilities at current loads.
    pub fn reliability(&self, net: &InfrastructureNetwork) -> f64 {
        self.reliability_excluding(net, &BTreeSet::new())
    }

    /// Same as [`Path::reliability`] with the listed nodes treated as perfect.
    pub fn reliability_excluding(
        &self,
        net: &InfrastructureNetwork,
        excluded: &BTreeSet<NodeId>,
    ) -> f64 {
        let nodes: f64 = self
            .interior()
            .iter()
            .filter(|n| !excluded.contains(n))
            .map(|&n| net.node_reliability(n))
            .product();
        let edges: f64 = self.edges.iter().map(|&e| net.link_reliability(e)).product();
        nodes * edges
    }

    /// True when the two paths share an interior node or any edge.
    pub fn overlaps_internally(&self, other: &Path) -> bool {
        self.interior().iter().any(|n| other.interior().contains(n))
            || self.edges.iter().any(|e| other.edges.contains(e))
    }

    /// Whether the walk visits each node at most once.
    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathQuery {
    pub src: NodeId,
    pub dst: NodeId,
    /// Maximum hop count.
    pub max_len: usize,
    /// MBps that must fit in the residual pool on every edge.
    pub bw_required: f64,
    pub pool: Pool,
    /// Propagation budget in seconds.
    pub latency_budget: Option<f64>,
}

fn edge_usable(net: &InfrastructureNetwork, link: LinkId, bw: f64, pool: Pool) -> bool {
    net.residual(link, pool) + LEDGER_EPS >= bw
}

struct Arc {
    to: usize,
    cap: i32,
    link: Option<LinkId>,
}

struct FlowGraph {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(vertices: usize) -> Self {
        Self {
            arcs: Vec::new(),
            out: vec![Vec::new(); vertices],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i32, link: Option<LinkId>) {
        self.out[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap, link });
        self.out[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0, link: None });
    }

    /// Edmonds–Karp; returns the flow value.
    fn max_flow(&mut self, s: usize, t: usize, limit: i32) -> i32 {
        let mut flow = 0;
        let mut pred = vec![usize::MAX; self.out.len()];
        while flow < limit {
            pred.iter_mut().for_each(|p| *p = usize::MAX);
            let mut queue = VecDeque::from([s]);
            let mut reached = false;
            while let Some(v) = queue.pop_front() {
                for &a in &self.out[v] {
                    let arc = &self.arcs[a];
                    if arc.cap > 0 && arc.to != s && pred[arc.to] == usize::MAX {
                        pred[arc.to] = a;
                        if arc.to == t {
                            reached = true;
                            break;
                        }
                        queue.push_back(arc.to);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                break;
            }
            let mut v = t;
            while v != s {
                let a = pred[v];
                self.arcs[a].cap -= 1;
                self.arcs[a ^ 1].cap += 1;
                v = self.arcs[a ^ 1].to;
            }
            flow += 1;
        }
        flow
    }
}

/// Pairwise internally-disjoint `src -> dst` paths meeting the query's hop,
/// bandwidth and latency limits. Returns an empty list when none exists or
/// when `src == dst`.
pub fn find_idps(net: &InfrastructureNetwork, q: &PathQuery) -> Vec<Path> {
    let n = net.node_count();
    if q.src == q.dst || q.src >= n || q.dst >= n || q.max_len == 0 {
        return Vec::new();
    }
    let budget_ms = q.latency_budget.map(|s| s * 1000.0);
    if budget_ms.is_some_and(|b| b < 0.0) {
        return Vec::new();
    }
    let usable = |l: LinkId| {
        edge_usable(net, l, q.bw_required, q.pool)
            && budget_ms.is_none_or(|b| net.links[l].prop_delay <= b + 1e-9)
    };

    // Vertex v splits into in = 2v and out = 2v + 1.
    let mut g = FlowGraph::new(2 * n);
    for v in 0..n {
        let cap = if v == q.src || v == q.dst { n as i32 } else { 1 };
        g.add(2 * v, 2 * v + 1, cap, None);
    }
    for (id, l) in net.links.iter().enumerate() {
        if !usable(id) {
            continue;
        }
        let (u, v) = l.endpoints;
        g.add(2 * u + 1, 2 * v, 1, Some(id));
        g.add(2 * v + 1, 2 * u, 1, Some(id));
    }
    let limit = net.degree(q.src).min(net.degree(q.dst)) as i32;
    let flow = g.max_flow(2 * q.src + 1, 2 * q.dst, limit);

    let mut paths = Vec::new();
    let mut used = vec![false; g.arcs.len()];
    for _ in 0..flow {
        let mut nodes = vec![q.src];
        let mut edges = Vec::new();
        let mut v = q.src;
        while v != q.dst {
            let next = g.out[2 * v + 1].iter().copied().find(|&a| {
                let arc = &g.arcs[a];
                a % 2 == 0 && arc.link.is_some() && arc.cap == 0 && !used[a]
            });
            let Some(a) = next else { break };
            used[a] = true;
            let w = g.arcs[a].to / 2;
            edges.push(g.arcs[a].link.expect("link arc"));
            nodes.push(w);
            v = w;
            if nodes.len() > n {
                break;
            }
        }
        if v == q.dst {
            paths.push(Path::new(nodes, edges));
        }
    }
    paths.retain(|p| {
        p.is_simple()
            && p.hops() <= q.max_len
            && budget_ms.is_none_or(|b| p.latency_ms(net) <= b + 1e-9)
    });

    // Top up with bounded fastest paths through still-free nodes.
    let mut blocked = vec![false; n];
    let mut direct_taken = false;
    for p in &paths {
        for &v in p.interior() {
            blocked[v] = true;
        }
        direct_taken |= p.hops() == 1;
    }
    loop {
        let Some(p) = bounded_fastest_path(net, q, &blocked, direct_taken, &usable) else {
            break;
        };
        if budget_ms.is_some_and(|b| p.latency_ms(net) > b + 1e-9) {
            break;
        }
        for &v in p.interior() {
            blocked[v] = true;
        }
        direct_taken |= p.hops() == 1;
        paths.push(p);
    }
    paths.sort_by(|a, b| a.hops().cmp(&b.hops()).then_with(|| a.nodes.cmp(&b.nodes)));
    paths
}

/// Minimum-latency walk of at most `q.max_len` hops avoiding blocked
/// interior nodes. With positive delays the optimum is a simple path.
fn bounded_fastest_path(
    net: &InfrastructureNetwork,
    q: &PathQuery,
    blocked: &[bool],
    skip_direct: bool,
    usable: &dyn Fn(LinkId) -> bool,
) -> Option<Path> {
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    dist[q.src] = 0.0;
    // pred[h][v] = (previous node, link) for the best h-hop walk to v.
    let mut pred: Vec<Vec<Option<(NodeId, LinkId)>>> = Vec::with_capacity(q.max_len);
    let mut layers = vec![dist.clone()];
    let mut best: Option<(f64, usize)> = None;
    for h in 1..=q.max_len {
        let prev = &layers[h - 1];
        let mut cur = vec![f64::INFINITY; n];
        let mut p = vec![None; n];
        for u in 0..n {
            if !prev[u].is_finite() || (u == q.dst) || (u != q.src && blocked[u]) {
                continue;
            }
            for &l in &net.adjacency[u] {
                if !usable(l) {
                    continue;
                }
                let v = net.links[l].other_end(u);
                if v == q.src || (v != q.dst && blocked[v]) {
                    continue;
                }
                if skip_direct && u == q.src && v == q.dst {
                    continue;
                }
                let d = prev[u] + net.links[l].prop_delay;
                if d < cur[v] {
                    cur[v] = d;
                    p[v] = Some((u, l));
                }
            }
        }
        if cur[q.dst] < best.map_or(f64::INFINITY, |b| b.0) {
            best = Some((cur[q.dst], h));
        }
        pred.push(p);
        layers.push(cur);
    }
    let (_, hops) = best?;
    let mut nodes = vec![q.dst];
    let mut edges = Vec::new();
    let mut v = q.dst;
    for h in (1..=hops).rev() {
        let (u, l) = pred[h - 1][v]?;
        nodes.push(u);
        edges.push(l);
        v = u;
    }
    nodes.reverse();
    edges.reverse();
    let path = Path::new(nodes, edges);
    path.is_simple().then_some(path)
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Single minimum-latency path over links with enough residual bandwidth,
/// with no hop bound.
pub fn shortest_feasible_path(
    net: &InfrastructureNetwork,
    src: NodeId,
    dst: NodeId,
    bw_required: f64,
    pool: Pool,
    latency_budget: Option<f64>,
) -> Option<Path> {
    if src == dst {
        return None;
    }
    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
    let mut heap = BinaryHeap::from([HeapItem(0.0, src)]);
    dist[src] = 0.0;
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == dst {
            break;
        }
        for &l in &net.adjacency[u] {
            if !edge_usable(net, l, bw_required, pool) {
                continue;
            }
            let v = net.links[l].other_end(u);
            let nd = d + net.links[l].prop_delay;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some((u, l));
                heap.push(HeapItem(nd, v));
            }
        }
    }
    if !dist[dst].is_finite() || latency_budget.is_some_and(|b| dist[dst] > b * 1000.0 + 1e-9) {
        return None;
    }
    let mut nodes = vec![dst];
    let mut edges = Vec::new();
    let mut v = dst;
    while v != src {
        let (u, l) = pred[v]?;
        nodes.push(u);
        edges.push(l);
        v = u;
    }
    nodes.reverse();
    edges.reverse();
    Some(Path::new(nodes, edges))
}

/// Bandwidth fits on every edge and the link latency over this path meets
/// the deadline.
#[allow(clippy::too_many_arguments)]
pub fn path_feasible(
    net: &InfrastructureNetwork,
    path: &Path,
    bw_required: f64,
    pool: Pool,
    deadline: f64,
    data_volume: f64,
    bw_demand: f64,
    child_proc_latency: f64,
) -> bool {
    if !path.edges.iter().all(|&e| edge_usable(net, e, bw_required, pool)) {
        return false;
    }
    let transmission = if data_volume <= 0.0 {
        0.0
    } else if bw_demand <= 0.0 {
        f64::INFINITY
    } else {
        data_volume / bw_demand
    };
    let latency = transmission + (path.latency_ms(net) + child_proc_latency) / 1000.0;
    latency <= deadline
}
