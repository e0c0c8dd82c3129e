//! Infrastructure network: physical nodes and links with their resource
//! ledgers, load-dependent node reliability and random topology generation.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::rng::rng_from;

pub type NodeId = usize;
pub type LinkId = usize;

/// Slack used when comparing floating-point ledgers against capacities.
pub const LEDGER_EPS: f64 = 1e-9;

/// Bandwidth pool a reservation is charged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Protected,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNode {
    pub id: NodeId,
    /// Total CPU cores.
    pub cpu_capacity: f64,
    /// Cores currently allocated to placed instances.
    pub cpu_allocated: f64,
    /// Fraction of `cpu_capacity` above which the node runs in its
    /// high-load reliability regime.
    pub load_threshold: f64,
    pub rel_low: f64,
    pub rel_high: f64,
}

impl PhysicalNode {
    /// Reliability at a given allocation level. The threshold itself still
    /// counts as low load.
    pub fn reliability_at(&self, allocated: f64) -> f64 {
        if allocated <= self.load_threshold * self.cpu_capacity + LEDGER_EPS {
            self.rel_low
        } else {
            self.rel_high
        }
    }

    pub fn reliability(&self) -> f64 {
        self.reliability_at(self.cpu_allocated)
    }

    pub fn cpu_residual(&self) -> f64 {
        (self.cpu_capacity - self.cpu_allocated).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub endpoints: (NodeId, NodeId),
    /// MBps.
    pub bw_capacity: f64,
    pub bw_protected: f64,
    pub bw_shared: f64,
    /// Propagation delay in ms.
    pub prop_delay: f64,
    /// Failures per time unit.
    pub failure_rate: f64,
}

impl PhysicalLink {
    pub fn other_end(&self, node: NodeId) -> NodeId {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    /// Survival probability over one time unit.
    pub fn reliability(&self) -> f64 {
        (-self.failure_rate).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfrastructureNetwork {
    pub nodes: Vec<PhysicalNode>,
    pub links: Vec<PhysicalLink>,
    pub access_nodes: BTreeSet<NodeId>,
    /// Incident link ids per node.
    pub adjacency: Vec<Vec<LinkId>>,
    /// Shared pool size as a multiple of each link's protected capacity.
    pub shared_ratio: f64,
}

/// Sampling ranges for random topologies. Pairs are inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyRanges {
    /// Integer core counts are drawn from this range.
    pub cpu_capacity: (u32, u32),
    pub load_threshold: f64,
    pub rel_low: (f64, f64),
    pub rel_high: (f64, f64),
    pub bw_capacity: (f64, f64),
    pub prop_delay: (f64, f64),
    pub link_failure_rate: f64,
}

impl Default for TopologyRanges {
    fn default() -> Self {
        Self {
            cpu_capacity: (8, 16),
            load_threshold: 0.5,
            rel_low: (0.9999, 0.99999),
            rel_high: (0.999, 0.9999),
            bw_capacity: (100.0, 1000.0),
            prop_delay: (1.0, 10.0),
            link_failure_rate: 0.00001,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Erdős–Rényi G(n, p) topology with per-element parameters drawn from
/// `ranges`. Access nodes are left empty; see [`select_access_nodes`].
pub fn generate_er_topology(
    node_count: usize,
    edge_prob: f64,
    ranges: &TopologyRanges,
    rng_seed: u64,
) -> Result<InfrastructureNetwork, TopologyError> {
    if node_count == 0 {
        return Err(TopologyError::NoNodes);
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(TopologyError::BadEdgeProbability(edge_prob));
    }
    let mut rng = rng_from(rng_seed, &[0x70_70]);
    let mut pairs = Vec::new();
    for u in 0..node_count {
        for v in (u + 1)..node_count {
            if rng.random::<f64>() < edge_prob {
                pairs.push((u, v));
            }
        }
    }
    let nodes = (0..node_count)
        .map(|id| {
            let (clo, chi) = ranges.cpu_capacity;
            PhysicalNode {
                id,
                cpu_capacity: rng.random_range(clo..=chi.max(clo)) as f64,
                cpu_allocated: 0.0,
                load_threshold: ranges.load_threshold,
                rel_low: uniform(&mut rng, ranges.rel_low),
                rel_high: uniform(&mut rng, ranges.rel_high),
            }
        })
        .collect::<Vec<_>>();
    let links = pairs
        .into_iter()
        .map(|endpoints| PhysicalLink {
            endpoints,
            bw_capacity: uniform(&mut rng, ranges.bw_capacity),
            bw_protected: 0.0,
            bw_shared: 0.0,
            prop_delay: uniform(&mut rng, ranges.prop_delay),
            failure_rate: ranges.link_failure_rate,
        })
        .collect();
    InfrastructureNetwork::new(nodes, links)
}

/// The `ceil(fraction * |N|)` lowest-degree nodes; ties go to the lower index.
pub fn select_access_nodes(net: &InfrastructureNetwork, fraction: f64) -> BTreeSet<NodeId> {
    let n = net.nodes.len();
    let want = ((fraction * n as f64).ceil() as usize).min(n);
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by_key(|&v| (net.degree(v), v));
    order.into_iter().take(want).collect()
}

impl InfrastructureNetwork {
    pub fn new(
        nodes: Vec<PhysicalNode>,
        links: Vec<PhysicalLink>,
    ) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::NoNodes);
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = BTreeSet::new();
        for (id, l) in links.iter().enumerate() {
            let (u, v) = l.endpoints;
            if u >= nodes.len() || v >= nodes.len() {
                return Err(TopologyError::UnknownNode(u.max(v)));
            }
            if u == v {
                return Err(TopologyError::Invalid(format!("self-loop on node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(TopologyError::Invalid(format!("parallel link {u}-{v}")));
            }
            if l.prop_delay <= 0.0 || l.failure_rate < 0.0 || l.bw_capacity < 0.0 {
                return Err(TopologyError::Invalid(format!("link {id} has bad parameters")));
            }
            adjacency[u].push(id);
            adjacency[v].push(id);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(TopologyError::Invalid(format!("node {i} carries id {}", n.id)));
            }
            let rel_ok = 0.0 < n.rel_high && n.rel_high <= n.rel_low && n.rel_low <= 1.0;
            if !rel_ok || !(0.0..=1.0).contains(&n.load_threshold) || n.cpu_capacity < 0.0 {
                return Err(TopologyError::Invalid(format!("node {i} has bad parameters")));
            }
        }
        Ok(Self {
            nodes,
            links,
            access_nodes: BTreeSet::new(),
            adjacency,
            shared_ratio: 1.0,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        self.adjacency
            .get(u)?
            .iter()
            .copied()
            .find(|&l| self.links[l].other_end(u) == v)
    }

    pub fn node_reliability(&self, node: NodeId) -> f64 {
        node_reliability(&self.nodes[node])
    }

    /// Current reliability of every node, indexed by node id.
    pub fn node_reliabilities(&self) -> Vec<f64> {
        self.nodes.iter().map(node_reliability).collect()
    }

    /// Reliability the node would have after `extra` more cores are allocated.
    pub fn node_reliability_after(&self, node: NodeId, extra: f64) -> f64 {
        let n = &self.nodes[node];
        n.reliability_at(n.cpu_allocated + extra)
    }

    pub fn link_reliability(&self, link: LinkId) -> f64 {
        self.links[link].reliability()
    }

    pub fn pool_limit(&self, link: LinkId, pool: Pool) -> f64 {
        let cap = self.links[link].bw_capacity;
        match pool {
            Pool::Protected => cap,
            Pool::Shared => self.shared_ratio * cap,
        }
    }

    pub fn pool_allocated(&self, link: LinkId, pool: Pool) -> f64 {
        let l = &self.links[link];
        match pool {
            Pool::Protected => l.bw_protected,
            Pool::Shared => l.bw_shared,
        }
    }

    pub fn residual(&self, link: LinkId, pool: Pool) -> f64 {
        self.pool_limit(link, pool) - self.pool_allocated(link, pool)
    }

    pub fn allocate_cpu(&mut self, node: NodeId, amount: f64) -> Result<(), TopologyError> {
        if amount < 0.0 {
            return Err(TopologyError::NegativeAmount(amount));
        }
        let n = self
            .nodes
            .get_mut(node)
            .ok_or(TopologyError::UnknownNode(node))?;
        if n.cpu_allocated + amount > n.cpu_capacity + LEDGER_EPS {
            return Err(TopologyError::CpuExceeded {
                node,
                requested: amount,
                allocated: n.cpu_allocated,
                capacity: n.cpu_capacity,
            });
        }
        n.cpu_allocated += amount;
        Ok(())
    }

    pub fn release_cpu(&mut self, node: NodeId, amount: f64) -> Result<(), TopologyError> {
        if amount < 0.0 {
            return Err(TopologyError::NegativeAmount(amount));
        }
        let n = self
            .nodes
            .get_mut(node)
            .ok_or(TopologyError::UnknownNode(node))?;
        n.cpu_allocated = (n.cpu_allocated - amount).max(0.0);
        if n.cpu_allocated < LEDGER_EPS {
            n.cpu_allocated = 0.0;
        }
        Ok(())
    }

    pub fn allocate_bandwidth(
        &mut self,
        link: LinkId,
        amount: f64,
        pool: Pool,
    ) -> Result<(), TopologyError> {
        if amount < 0.0 {
            return Err(TopologyError::NegativeAmount(amount));
        }
        if link >= self.links.len() {
            return Err(TopologyError::UnknownLink(link));
        }
        let limit = self.pool_limit(link, pool);
        let allocated = self.pool_allocated(link, pool);
        if allocated + amount > limit + LEDGER_EPS {
            return Err(TopologyError::BandwidthExceeded {
                link,
                pool,
                requested: amount,
                allocated,
                limit,
            });
        }
        let l = &mut self.links[link];
        match pool {
            Pool::Protected => l.bw_protected += amount,
            Pool::Shared => l.bw_shared += amount,
        }
        Ok(())
    }

    pub fn release_bandwidth(
        &mut self,
        link: LinkId,
        amount: f64,
        pool: Pool,
    ) -> Result<(), TopologyError> {
        if amount < 0.0 {
            return Err(TopologyError::NegativeAmount(amount));
        }
        let l = self
            .links
            .get_mut(link)
            .ok_or(TopologyError::UnknownLink(link))?;
        let slot = match pool {
            Pool::Protected => &mut l.bw_protected,
            Pool::Shared => &mut l.bw_shared,
        };
        *slot = (*slot - amount).max(0.0);
        if *slot < LEDGER_EPS {
            *slot = 0.0;
        }
        Ok(())
    }

    /// Drops every allocation, keeping the static parameters.
    pub fn clear_ledgers(&mut self) {
        for n in &mut self.nodes {
            n.cpu_allocated = 0.0;
        }
        for l in &mut self.links {
            l.bw_protected = 0.0;
            l.bw_shared = 0.0;
        }
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    cpu_capacity: n.cpu_capacity,
                    load_threshold: n.load_threshold,
                    rel_low: n.rel_low,
                    rel_high: n.rel_high,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkRecord {
                    u: l.endpoints.0,
                    v: l.endpoints.1,
                    bw_capacity: l.bw_capacity,
                    prop_delay: l.prop_delay,
                    failure_rate: l.failure_rate,
                })
                .collect(),
            access_nodes: self.access_nodes.iter().copied().collect(),
            shared_ratio: self.shared_ratio,
        }
    }

    pub fn from_file(file: &TopologyFile) -> Result<Self, TopologyError> {
        let nodes = file
            .nodes
            .iter()
            .map(|r| PhysicalNode {
                id: r.id,
                cpu_capacity: r.cpu_capacity,
                cpu_allocated: 0.0,
                load_threshold: r.load_threshold,
                rel_low: r.rel_low,
                rel_high: r.rel_high,
            })
            .collect();
        let links = file
            .links
            .iter()
            .map(|r| PhysicalLink {
                endpoints: (r.u, r.v),
                bw_capacity: r.bw_capacity,
                bw_protected: 0.0,
                bw_shared: 0.0,
                prop_delay: r.prop_delay,
                failure_rate: r.failure_rate,
            })
            .collect();
        let mut net = Self::new(nodes, links)?;
        for &a in &file.access_nodes {
            if a >= net.nodes.len() {
                return Err(TopologyError::UnknownNode(a));
            }
        }
        net.access_nodes = file.access_nodes.iter().copied().collect();
        net.shared_ratio = file.shared_ratio;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile =
            serde_json::from_str(s).map_err(|e| TopologyError::Invalid(e.to_string()))?;
        Self::from_file(&file)
    }
}

/// Two-segment load-dependent reliability of a node at its current load.
pub fn node_reliability(node: &PhysicalNode) -> f64 {
    node.reliability()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub cpu_capacity: f64,
    pub load_threshold: f64,
    pub rel_low: f64,
    pub rel_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub u: NodeId,
    pub v: NodeId,
    pub bw_capacity: f64,
    pub prop_delay: f64,
    pub failure_rate: f64,
}

/// JSON schema for dumped topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub nodes: Vec<NodeRecord>,
    pub links: Vec<LinkRecord>,
    pub access_nodes: Vec<NodeId>,
    #[serde(default = "default_shared_ratio")]
    pub shared_ratio: f64,
}

fn default_shared_ratio() -> f64 {
    1.0
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(id: NodeId, cap: f64, rel: f64) -> PhysicalNode {
        PhysicalNode {
            id,
            cpu_capacity: cap,
            cpu_allocated: 0.0,
            load_threshold: 0.5,
            rel_low: rel,
            rel_high: rel,
        }
    }

    pub fn link(u: NodeId, v: NodeId, bw: f64, failure_rate: f64) -> PhysicalLink {
        PhysicalLink {
            endpoints: (u, v),
            bw_capacity: bw,
            bw_protected: 0.0,
            bw_shared: 0.0,
            prop_delay: 1.0,
            failure_rate,
        }
    }

    /// Uniform network from an edge list.
    pub fn graph(n: usize, edges: &[(NodeId, NodeId)], node_rel: f64, link_rate: f64) -> InfrastructureNetwork {
        let nodes = (0..n).map(|i| node(i, 16.0, node_rel)).collect();
        let links = edges.iter().map(|&(u, v)| link(u, v, 100.0, link_rate)).collect();
        InfrastructureNetwork::new(nodes, links).unwrap()
    }
}
