use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::TopologyError;
use crate::pathfinding::Path;
use crate::topology::{InfrastructureNetwork, NodeId, Pool};
use crate::workload::{MsId, ServiceRequest};

/// How bandwidth is reserved for links that involve a backup instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    #[default]
    FullyProtected,
    Shared,
}

/// One instance link: request link `link` between child instance
/// `child_index` and parent instance `parent_index`. Index 0 is the primary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteKey {
    pub link: usize,
    pub child_index: usize,
    pub parent_index: usize,
}

impl RouteKey {
    pub fn is_primary(&self) -> bool {
        self.child_index == 0 && self.parent_index == 0
    }

    /// The primary-to-primary link this one stands in for.
    pub fn primary_counterpart(&self) -> RouteKey {
        RouteKey {
            link: self.link,
            child_index: 0,
            parent_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Empty when both instances share a node.
    pub paths: Vec<Path>,
    pub pool: Pool,
    /// MBps reserved on every edge of every path.
    pub bw: f64,
}

impl Route {
    pub fn colocated(&self) -> bool {
        self.paths.is_empty()
    }
}

/// A (possibly partial) mapping of one request onto the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementState {
    pub request_id: usize,
    pub mechanism: Mechanism,
    /// `instances[m][b]` is the node hosting instance `b` of microservice `m`.
    /// The access microservice always has exactly one instance.
    pub instances: Vec<Vec<NodeId>>,
    pub routes: BTreeMap<RouteKey, Route>,
    /// Microservice reliability observed right after each instance was placed.
    pub recorded_sigma: Vec<Vec<f64>>,
    /// Reliability of each instance (node included) when it was placed.
    pub instance_sigma: Vec<Vec<f64>>,
    pub blacklist: Vec<BTreeSet<NodeId>>,
    pub backtracks: usize,
}

impl PlacementState {
    pub fn new(request: &ServiceRequest, mechanism: Mechanism) -> Self {
        let n = request.microservices.len();
        let mut instances = vec![Vec::new(); n];
        instances[0].push(request.access_node);
        let mut recorded_sigma = vec![Vec::new(); n];
        recorded_sigma[0].push(1.0);
        let mut instance_sigma = vec![Vec::new(); n];
        instance_sigma[0].push(1.0);
        Self {
            request_id: request.id,
            mechanism,
            instances,
            routes: BTreeMap::new(),
            recorded_sigma,
            instance_sigma,
            blacklist: vec![BTreeSet::new(); n],
            backtracks: 0,
        }
    }

    pub fn node_of(&self, m: MsId, b: usize) -> Option<NodeId> {
        self.instances.get(m).and_then(|v| v.get(b)).copied()
    }

    pub fn is_placed(&self, m: MsId) -> bool {
        !self.instances[m].is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.instances.iter().all(|v| !v.is_empty())
    }

    pub fn backup_count(&self) -> usize {
        self.instances[1..]
            .iter()
            .map(|v| v.len().saturating_sub(1))
            .sum()
    }

    pub fn pool_for(&self, key: &RouteKey) -> Pool {
        match self.mechanism {
            Mechanism::FullyProtected => Pool::Protected,
            Mechanism::Shared if key.is_primary() => Pool::Protected,
            Mechanism::Shared => Pool::Shared,
        }
    }

    /// Nodes in use by this placement, hosting or routing.
    pub fn touched_nodes(&self) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = self.instances.iter().flatten().copied().collect();
        for r in self.routes.values() {
            for p in &r.paths {
                out.extend(p.nodes.iter().copied());
            }
        }
        out
    }

    /// Route keys with instance `(m, b)` on either end.
    pub fn routes_touching(&self, request: &ServiceRequest, m: MsId, b: usize) -> Vec<RouteKey> {
        self.routes
            .keys()
            .filter(|k| {
                let l = &request.links[k.link];
                (l.child == m && k.child_index == b) || (l.parent == m && k.parent_index == b)
            })
            .copied()
            .collect()
    }

    /// Adds instance `(m, next index)` on `node`, reserving CPU and every
    /// path of every supplied route. Paths that no longer fit are dropped
    /// and a route left without paths is dropped. Nothing is changed on error.
    pub fn add_instance(
        &mut self,
        net: &mut InfrastructureNetwork,
        request: &ServiceRequest,
        m: MsId,
        node: NodeId,
        routes: Vec<(RouteKey, Vec<Path>)>,
    ) -> Result<usize, TopologyError> {
        net.allocate_cpu(node, request.microservices[m].cpu_demand)?;
        let b = self.instances[m].len();
        self.instances[m].push(node);
        self.recorded_sigma[m].push(0.0);
        self.instance_sigma[m].push(0.0);
        for (key, paths) in routes {
            let pool = self.pool_for(&key);
            let bw = request.links[key.link].bw_demand;
            if paths.is_empty() {
                self.routes.insert(key, Route { paths, pool, bw });
                continue;
            }
            let mut kept = Vec::with_capacity(paths.len());
            for p in paths {
                if reserve_path(net, &p, bw, pool).is_ok() {
                    kept.push(p);
                }
            }
            if !kept.is_empty() {
                self.routes.insert(key, Route { paths: kept, pool, bw });
            }
        }
        Ok(b)
    }

    /// Removes the last instance of `m`, releasing its CPU and every route
    /// touching it.
    pub fn remove_last_instance(
        &mut self,
        net: &mut InfrastructureNetwork,
        request: &ServiceRequest,
        m: MsId,
    ) {
        let Some(&node) = self.instances[m].last() else {
            return;
        };
        let b = self.instances[m].len() - 1;
        for key in self.routes_touching(request, m, b) {
            let route = self.routes.remove(&key).expect("listed route");
            release_route(net, &route);
        }
        net.release_cpu(node, request.microservices[m].cpu_demand)
            .expect("release of a held allocation");
        self.instances[m].pop();
        self.recorded_sigma[m].pop();
        self.instance_sigma[m].pop();
    }

    /// Returns every resource this placement holds.
    pub fn release_all(&mut self, net: &mut InfrastructureNetwork, request: &ServiceRequest) {
        for route in std::mem::take(&mut self.routes).into_values() {
            release_route(net, &route);
        }
        for m in 1..self.instances.len() {
            for &node in &self.instances[m] {
                net.release_cpu(node, request.microservices[m].cpu_demand)
                    .expect("release of a held allocation");
            }
            self.instances[m].clear();
            self.recorded_sigma[m].clear();
            self.instance_sigma[m].clear();
        }
    }

    /// Latest recorded microservice reliability, or `None` when unplaced.
    pub fn latest_sigma(&self, m: MsId) -> Option<f64> {
        self.recorded_sigma[m].last().copied()
    }
}

fn reserve_path(
    net: &mut InfrastructureNetwork,
    path: &Path,
    bw: f64,
    pool: Pool,
) -> Result<(), TopologyError> {
    for (i, &e) in path.edges.iter().enumerate() {
        if let Err(err) = net.allocate_bandwidth(e, bw, pool) {
            for &done in &path.edges[..i] {
                net.release_bandwidth(done, bw, pool)
                    .expect("release of a held allocation");
            }
            return Err(err);
        }
    }
    Ok(())
}

fn release_route(net: &mut InfrastructureNetwork, route: &Route) {
    for p in &route.paths {
        for &e in &p.edges {
            net.release_bandwidth(e, route.bw, route.pool)
                .expect("release of a held allocation");
        }
    }
}
