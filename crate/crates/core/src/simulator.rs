//! Discrete-time fault injection: requests arrive, get placed, run for their
//! lifetime and fail when a sampled component failure leaves some
//! microservice without a working instance.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::placement::{
    place_request, Mechanism, PlacementConfig, PlacementContext, PlacementState, Route, RouteKey,
    SharedIndex,
};
use crate::rng::{derive_seed, keyed_uniform};
use crate::topology::{generate_er_topology, select_access_nodes, InfrastructureNetwork, Pool, TopologyRanges};
use crate::workload::{generate_workload, MsId, ServiceRequest, WorkloadRanges};

/// Upper edges of the reliability histogram bands; the last band is closed.
pub const HISTOGRAM_EDGES: [f64; 3] = [0.99, 0.999, 0.9999];
pub const HISTOGRAM_LABELS: [&str; 4] = ["[0,0.99)", "[0.99,0.999)", "[0.999,0.9999)", "[0.9999,1]"];

const KIND_NODE: u64 = 0;
const KIND_LINK: u64 = 1;
const KIND_INSTANCE: u64 = 2;
const KIND_INSTANCE_LINK: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// A failed service is removed and its resources released.
    #[default]
    Remove,
    /// Every step a service is observed dead counts; it keeps running.
    CountAndContinue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub node_count: usize,
    pub edge_prob: f64,
    /// Fraction of nodes, lowest degree first, that receive requests.
    pub access_fraction: f64,
    pub topology: TopologyRanges,
    pub request_count: usize,
    pub arrival_rate: f64,
    pub workload: WorkloadRanges,
    pub placement: PlacementConfig,
    /// Shared pool size relative to each link's protected capacity.
    pub shared_ratio: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// Steps to simulate; by default until every request has expired.
    pub horizon: Option<u32>,
    pub failure_mode: FailureMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            node_count: 50,
            edge_prob: 0.2,
            access_fraction: 0.2,
            topology: TopologyRanges::default(),
            request_count: 100,
            arrival_rate: 1.0,
            workload: WorkloadRanges::default(),
            placement: PlacementConfig::default(),
            shared_ratio: 1.0,
            repetitions: 100,
            seed: 1,
            horizon: None,
            failure_mode: FailureMode::Remove,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::Config(msg.to_string()));
        if self.node_count == 0 {
            return bad("node_count must be positive");
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return bad("edge_prob must lie in (0, 1]");
        }
        if !(self.access_fraction > 0.0 && self.access_fraction <= 1.0) {
            return bad("access_fraction must lie in (0, 1]");
        }
        if self.request_count == 0 {
            return bad("request_count must be positive");
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return bad("arrival_rate must be positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive");
        }
        if !(self.workload.cpu_scale >= 1.0 && self.workload.bw_scale >= 1.0) {
            return bad("demand multipliers must be at least 1");
        }
        if !(self.shared_ratio >= 0.0) {
            return bad("shared_ratio must be non-negative");
        }
        if self.placement.max_path_len == 0 {
            return bad("max_path_len must be positive");
        }
        Ok(())
    }

    /// Seed of repetition `rep` in a batch.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, &[rep as u64])
    }
}

/// A network and request stream ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: InfrastructureNetwork,
    pub requests: Vec<ServiceRequest>,
    pub horizon: u32,
    /// Seed for failure draws.
    pub fail_seed: u64,
    /// Seed for randomized placement heuristics.
    pub placement_seed: u64,
}

impl Scenario {
    /// Topology, workload, failures and placement randomness each draw from
    /// their own stream derived from `cfg.seed`.
    pub fn generate(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut net = generate_er_topology(cfg.node_count, cfg.edge_prob, &cfg.topology, derive_seed(cfg.seed, &[1]))?;
        net.shared_ratio = cfg.shared_ratio;
        net.access_nodes = select_access_nodes(&net, cfg.access_fraction);
        let requests = generate_workload(
            cfg.request_count,
            cfg.arrival_rate,
            &cfg.workload,
            &net.access_nodes,
            derive_seed(cfg.seed, &[2]),
        )?;
        let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&requests));
        Ok(Self {
            net,
            requests,
            horizon,
            fail_seed: derive_seed(cfg.seed, &[3]),
            placement_seed: derive_seed(cfg.seed, &[4]),
        })
    }
}

/// First step at which every request has arrived and expired.
pub fn default_horizon(requests: &[ServiceRequest]) -> u32 {
    requests
        .iter()
        .map(|r| r.arrival_time.floor() as u32 + r.lifetime)
        .max()
        .map_or(0, |h| h + 1)
}

/// Components failed during one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentFailureSample {
    pub failed_nodes: Vec<bool>,
    pub failed_links: Vec<bool>,
    /// `(request, microservice, instance)`.
    pub failed_instances: HashSet<(usize, MsId, usize)>,
    /// `(request, instance link)`.
    pub failed_instance_links: HashSet<(usize, RouteKey)>,
}

/// Independent per-component failure draws for step `t`. Nodes fail with
/// probability one minus their reliability at the current load, everything
/// else with one minus its one-step survival probability.
pub fn sample_failures<'a>(
    net: &InfrastructureNetwork,
    active: impl IntoIterator<Item = (&'a ServiceRequest, &'a PlacementState)>,
    seed: u64,
    t: u64,
) -> ComponentFailureSample {
    let failed_nodes = (0..net.node_count())
        .map(|n| keyed_uniform(seed, &[t, KIND_NODE, n as u64]) < 1.0 - net.node_reliability(n))
        .collect();
    let failed_links = (0..net.links.len())
        .map(|e| keyed_uniform(seed, &[t, KIND_LINK, e as u64]) < 1.0 - net.link_reliability(e))
        .collect();
    let mut sample = ComponentFailureSample {
        failed_nodes,
        failed_links,
        ..Default::default()
    };
    for (req, state) in active {
        let id = req.id as u64;
        for (m, nodes) in state.instances.iter().enumerate().skip(1) {
            let q = 1.0 - req.microservices[m].reliability();
            for b in 0..nodes.len() {
                if keyed_uniform(seed, &[t, KIND_INSTANCE, id, m as u64, b as u64]) < q {
                    sample.failed_instances.insert((req.id, m, b));
                }
            }
        }
        for key in state.routes.keys() {
            let q = 1.0 - req.links[key.link].reliability();
            let k = [t, KIND_INSTANCE_LINK, id, key.link as u64, key.child_index as u64, key.parent_index as u64];
            if keyed_uniform(seed, &k) < q {
                sample.failed_instance_links.insert((req.id, *key));
            }
        }
    }
    sample
}

/// Protected bandwidth claimed on each edge during one step: the standing
/// reservations plus shared links activated so far.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedClaims {
    used: Vec<f64>,
    capacity: Vec<f64>,
}

impl ProtectedClaims {
    pub fn new(net: &InfrastructureNetwork) -> Self {
        Self {
            used: net.links.iter().map(|l| l.bw_protected).collect(),
            capacity: (0..net.links.len()).map(|e| net.pool_limit(e, Pool::Protected)).collect(),
        }
    }

    /// Claims `bw` on every edge of `edges`, all or nothing.
    fn claim(&mut self, edges: &[usize], bw: f64) -> bool {
        let mut need: Vec<usize> = edges.to_vec();
        need.sort_unstable();
        need.dedup();
        if need
            .iter()
            .any(|&e| self.used[e] + bw > self.capacity[e] + crate::topology::LEDGER_EPS)
        {
            return false;
        }
        for e in need {
            self.used[e] += bw;
        }
        true
    }
}

fn path_up(sample: &ComponentFailureSample, nodes: &[usize], edges: &[usize]) -> bool {
    nodes.iter().all(|&n| !sample.failed_nodes[n]) && edges.iter().all(|&e| !sample.failed_links[e])
}

/// Whether instance link `key` carries traffic this step. A shared link is
/// active only while its primary counterpart is down, and then it must claim
/// protected bandwidth on the edges of its surviving paths.
fn route_works(
    request: &ServiceRequest,
    state: &PlacementState,
    sample: &ComponentFailureSample,
    key: &RouteKey,
    route: &Route,
    claims: &mut Option<&mut ProtectedClaims>,
) -> bool {
    if sample.failed_instance_links.contains(&(request.id, *key)) {
        return false;
    }
    if route.colocated() {
        return true;
    }
    let up: Vec<&crate::pathfinding::Path> = route
        .paths
        .iter()
        .filter(|p| path_up(sample, &p.nodes, &p.edges))
        .collect();
    if up.is_empty() {
        return false;
    }
    if route.pool != Pool::Shared || primary_link_works(request, state, sample, key) {
        return true;
    }
    match claims {
        Some(c) => {
            let edges: Vec<usize> = up.iter().flat_map(|p| p.edges.iter().copied()).collect();
            c.claim(&edges, route.bw)
        }
        None => true,
    }
}

/// The primary-to-primary counterpart of `key` works on its own: both
/// primary instances and their nodes are up and one of its paths survives.
fn primary_link_works(
    request: &ServiceRequest,
    state: &PlacementState,
    sample: &ComponentFailureSample,
    key: &RouteKey,
) -> bool {
    let l1 = key.primary_counterpart();
    let link = &request.links[l1.link];
    let local_up = |m: MsId| {
        let node = state.instances[m][0];
        !sample.failed_nodes[node] && !sample.failed_instances.contains(&(request.id, m, 0))
    };
    if !local_up(link.child) || !local_up(link.parent) {
        return false;
    }
    if sample.failed_instance_links.contains(&(request.id, l1)) {
        return false;
    }
    match state.routes.get(&l1) {
        Some(r) => r.colocated() || r.paths.iter().any(|p| path_up(sample, &p.nodes, &p.edges)),
        None => false,
    }
}

/// Bottom-up liveness: an instance works when its software and node survive
/// and, for every parent microservice, some working parent instance reaches
/// it over a working instance link. Shared links claim protected bandwidth
/// from `claims` when they activate.
pub fn evaluate_service_alive(
    request: &ServiceRequest,
    state: &PlacementState,
    sample: &ComponentFailureSample,
    mut claims: Option<&mut ProtectedClaims>,
) -> bool {
    let mut op: Vec<Vec<bool>> = state.instances.iter().map(|v| vec![false; v.len()]).collect();
    op[0][0] = !sample.failed_nodes[request.access_node];
    if !op[0][0] {
        return false;
    }
    for m in request.bfs_order() {
        for b in 0..state.instances[m].len() {
            let node = state.instances[m][b];
            if sample.failed_nodes[node] || sample.failed_instances.contains(&(request.id, m, b)) {
                continue;
            }
            let mut ok = true;
            for (li, link) in request.links.iter().enumerate() {
                if link.child != m {
                    continue;
                }
                let reached = (0..state.instances[link.parent].len()).any(|pb| {
                    if !op[link.parent][pb] {
                        return false;
                    }
                    let key = RouteKey {
                        link: li,
                        child_index: b,
                        parent_index: pb,
                    };
                    match state.routes.get(&key) {
                        Some(route) => route_works(request, state, sample, &key, route, &mut claims),
                        None => false,
                    }
                });
                if !reached {
                    ok = false;
                    break;
                }
            }
            op[m][b] = ok;
        }
        if !op[m].iter().any(|&x| x) {
            return false;
        }
    }
    true
}

/// Mean protected-pool reservation over all edges.
pub fn record_bandwidth(net: &InfrastructureNetwork) -> f64 {
    if net.links.is_empty() {
        return 0.0;
    }
    net.links.iter().map(|l| l.bw_protected).sum::<f64>() / net.links.len() as f64
}

pub fn histogram_bucket(r: f64) -> usize {
    HISTOGRAM_EDGES.iter().take_while(|&&e| r >= e).count()
}

/// One repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimResult {
    /// Failures counted up to and including each step.
    pub cumulative_failures: Vec<u64>,
    /// Mean protected reservation per edge at the end of each step (MBps).
    pub bandwidth: Vec<f64>,
    /// Successful placements per analytic reliability band.
    pub reliability_histogram: [u64; 4],
    pub placements_succeeded: u64,
    pub placements_rejected: u64,
    /// Analytic reliability of every successful placement, in arrival order.
    pub placement_reliability: Vec<f64>,
    /// CPU and bandwidth still reserved after the last step.
    pub residual_allocation: f64,
}

impl SimResult {
    pub fn total_failures(&self) -> u64 {
        self.cumulative_failures.last().copied().unwrap_or(0)
    }

    pub fn mean_bandwidth(&self) -> f64 {
        if self.bandwidth.is_empty() {
            0.0
        } else {
            self.bandwidth.iter().sum::<f64>() / self.bandwidth.len() as f64
        }
    }

    /// `t,cumulative_failures,mean_bandwidth` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cumulative_failures,mean_bandwidth\n");
        for (t, (f, b)) in self.cumulative_failures.iter().zip(&self.bandwidth).enumerate() {
            out.push_str(&format!("{t},{f},{b:.6}\n"));
        }
        out
    }
}

struct Running {
    request: usize,
    state: PlacementState,
    expires: u32,
}

/// Runs one scenario with the given placement configuration.
pub fn run_scenario(scenario: &Scenario, placement: &PlacementConfig, mode: FailureMode) -> SimResult {
    let mut net = scenario.net.clone();
    let requests = &scenario.requests;
    let shared = placement.mechanism == Mechanism::Shared;
    let mut index = SharedIndex::new(net.links.len());
    let mut running: Vec<Running> = Vec::new();
    let mut result = SimResult::default();
    let mut failures = 0u64;
    let mut next = 0;
    for t in 0..scenario.horizon {
        running.retain_mut(|r| {
            if t < r.expires {
                return true;
            }
            r.state.release_all(&mut net, &requests[r.request]);
            index.remove(r.state.request_id);
            false
        });
        while next < requests.len() && requests[next].arrival_time < f64::from(t + 1) {
            let req = &requests[next];
            let ctx = PlacementContext {
                shared: shared.then_some(&index),
                seed: scenario.placement_seed,
            };
            let out = place_request(&mut net, req, placement, ctx);
            if out.success {
                let r = out.reliability.unwrap_or(0.0);
                result.reliability_histogram[histogram_bucket(r)] += 1;
                result.placement_reliability.push(r);
                result.placements_succeeded += 1;
                if shared {
                    index.insert(req, &out.state);
                }
                running.push(Running {
                    request: next,
                    state: out.state,
                    expires: t + req.lifetime,
                });
            } else {
                result.placements_rejected += 1;
            }
            next += 1;
        }
        let sample = sample_failures(
            &net,
            running.iter().map(|r| (&requests[r.request], &r.state)),
            scenario.fail_seed,
            u64::from(t),
        );
        let mut claims = ProtectedClaims::new(&net);
        let mut dead = Vec::new();
        for (i, r) in running.iter().enumerate() {
            let claims = shared.then_some(&mut claims);
            if !evaluate_service_alive(&requests[r.request], &r.state, &sample, claims) {
                failures += 1;
                dead.push(i);
            }
        }
        if mode == FailureMode::Remove {
            for &i in dead.iter().rev() {
                let mut r = running.remove(i);
                r.state.release_all(&mut net, &requests[r.request]);
                index.remove(r.state.request_id);
            }
        }
        result.cumulative_failures.push(failures);
        result.bandwidth.push(record_bandwidth(&net));
    }
    for mut r in running.drain(..) {
        r.state.release_all(&mut net, &requests[r.request]);
    }
    result.residual_allocation = net.nodes.iter().map(|n| n.cpu_allocated.abs()).sum::<f64>()
        + net
            .links
            .iter()
            .map(|l| l.bw_protected.abs() + l.bw_shared.abs())
            .sum::<f64>();
    result
}

/// One repetition seeded by `cfg.seed`.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult, SimError> {
    let scenario = Scenario::generate(cfg)?;
    Ok(run_scenario(&scenario, &cfg.placement, cfg.failure_mode))
}

/// Repetitions with seeds derived from `cfg.seed`, run in parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BatchResult {
    pub runs: Vec<SimResult>,
}

impl BatchResult {
    fn mean(&self, f: impl Fn(&SimResult) -> f64) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().map(f).sum::<f64>() / self.runs.len() as f64
    }

    pub fn mean_total_failures(&self) -> f64 {
        self.mean(|r| r.total_failures() as f64)
    }

    pub fn mean_bandwidth(&self) -> f64 {
        self.mean(SimResult::mean_bandwidth)
    }

    pub fn success_rate(&self) -> f64 {
        self.mean(|r| {
            let total = r.placements_succeeded + r.placements_rejected;
            if total == 0 {
                0.0
            } else {
                r.placements_succeeded as f64 / total as f64
            }
        })
    }

    pub fn mean_histogram(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.mean(|r| r.reliability_histogram[i] as f64);
        }
        out
    }

    /// Per-step means; shorter runs are extended with their final value
    /// (failures) or zero (bandwidth).
    pub fn mean_series(&self) -> Vec<(f64, f64)> {
        let len = self.runs.iter().map(|r| r.cumulative_failures.len()).max().unwrap_or(0);
        let n = self.runs.len().max(1) as f64;
        (0..len)
            .map(|t| {
                let f: f64 = self
                    .runs
                    .iter()
                    .map(|r| r.cumulative_failures.get(t).or(r.cumulative_failures.last()).copied().unwrap_or(0) as f64)
                    .sum();
                let b: f64 = self.runs.iter().map(|r| r.bandwidth.get(t).copied().unwrap_or(0.0)).sum();
                (f / n, b / n)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cumulative_failures,mean_bandwidth\n");
        for (t, (f, b)) in self.mean_series().into_iter().enumerate() {
            out.push_str(&format!("{t},{f:.6},{b:.6}\n"));
        }
        out
    }
}

pub fn run_batch(cfg: &SimConfig) -> Result<BatchResult, SimError> {
    cfg.validate()?;
    let runs = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut c = cfg.clone();
            c.seed = cfg.repetition_seed(rep);
            run_simulation(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchResult { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::Algorithm;
    use crate::topology::fixtures::{graph, node};
    use crate::workload::{Microservice, MicroserviceLink};

    fn request(id: usize, access: usize, count: usize, backups: usize, lifetime: u32, arrival: f64) -> ServiceRequest {
        let mut microservices = vec![Microservice::access()];
        let mut links = Vec::new();
        for m in 1..=count {
            microservices.push(Microservice {
                id: m,
                cpu_demand: 1.0,
                proc_latency: 10.0,
                failure_rate: 0.0,
            });
            links.push(MicroserviceLink {
                parent: m - 1,
                child: m,
                bw_demand: 5.0,
                data_volume: 0.0,
                deadline: 10.0,
                failure_rate: 0.0,
            });
        }
        ServiceRequest {
            id,
            microservices,
            links,
            backup_limit: backups,
            lifetime,
            arrival_time: arrival,
            access_node: access,
        }
    }

    fn small_config(algorithm: Algorithm) -> SimConfig {
        SimConfig {
            node_count: 12,
            edge_prob: 0.4,
            request_count: 20,
            repetitions: 3,
            placement: PlacementConfig {
                algorithm,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn perfect_components_never_fail() {
        let mut cfg = small_config(Algorithm::Srp);
        cfg.topology.rel_low = (1.0, 1.0);
        cfg.topology.rel_high = (1.0, 1.0);
        cfg.topology.link_failure_rate = 0.0;
        cfg.workload.microservice_failure_rate = 0.0;
        cfg.workload.link_failure_rate = 0.0;
        let r = run_simulation(&cfg).unwrap();
        assert_eq!(r.total_failures(), 0);
        assert!(r.placements_succeeded > 0);
    }

    #[test]
    fn zero_rate_components_never_fail() {
        let net = graph(3, &[(0, 1), (1, 2)], 1.0, 0.0);
        let req = request(0, 0, 2, 0, 5, 0.0);
        let state = PlacementState::new(&req, Mechanism::FullyProtected);
        for t in 0..1000 {
            let s = sample_failures(&net, [(&req, &state)], 7, t);
            assert!(s.failed_nodes.iter().chain(&s.failed_links).all(|f| !f));
            assert!(s.failed_instances.is_empty() && s.failed_instance_links.is_empty());
        }
    }

    /// Expected link failures per step over many steps.
    #[test]
    fn link_failure_frequency() {
        let net = graph(20, &(1..20).map(|i| (0, i)).collect::<Vec<_>>(), 1.0, 0.01);
        let steps = 20_000;
        let failed: usize = (0..steps)
            .map(|t| sample_failures(&net, [], 3, t).failed_links.iter().filter(|f| **f).count())
            .sum();
        let p = 1.0 - (-0.01f64).exp();
        let n = (steps * 19) as f64;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((failed as f64 - n * p).abs() < 3.0 * sd, "{failed} vs {}", n * p);
    }

    #[test]
    fn histogram_bands() {
        assert_eq!(histogram_bucket(0.5), 0);
        assert_eq!(histogram_bucket(0.99), 1);
        assert_eq!(histogram_bucket(0.9989), 1);
        assert_eq!(histogram_bucket(0.999), 2);
        assert_eq!(histogram_bucket(0.99995), 3);
        assert_eq!(histogram_bucket(1.0), 3);
    }

    #[test]
    fn bandwidth_metric() {
        let mut net = graph(3, &[(0, 1)], 1.0, 0.0);
        assert_eq!(record_bandwidth(&net), 0.0);
        net.allocate_bandwidth(0, 10.0, Pool::Protected).unwrap();
        net.allocate_bandwidth(0, 30.0, Pool::Shared).unwrap();
        assert_eq!(record_bandwidth(&net), 10.0);
    }

    fn placed(net: &mut InfrastructureNetwork, req: &ServiceRequest, mechanism: Mechanism) -> PlacementState {
        let cfg = PlacementConfig {
            mechanism,
            ..Default::default()
        };
        let out = place_request(net, req, &cfg, PlacementContext::default());
        assert!(out.success);
        out.state
    }

    fn clean(net: &InfrastructureNetwork) -> ComponentFailureSample {
        ComponentFailureSample {
            failed_nodes: vec![false; net.node_count()],
            failed_links: vec![false; net.links.len()],
            ..Default::default()
        }
    }

    #[test]
    fn no_failures_means_alive() {
        let mut net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.99, 0.0);
        let req = request(0, 0, 2, 2, 5, 0.0);
        let state = placed(&mut net, &req, Mechanism::FullyProtected);
        assert!(evaluate_service_alive(&req, &state, &clean(&net), None));
    }

    #[test]
    fn sole_instance_node_down_kills_service() {
        let mut net = graph(3, &[(0, 1), (1, 2)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 0.0;
        let req = request(0, 0, 1, 0, 5, 0.0);
        let state = placed(&mut net, &req, Mechanism::FullyProtected);
        let mut s = clean(&net);
        s.failed_nodes[state.instances[1][0]] = true;
        assert!(!evaluate_service_alive(&req, &state, &s, None));
    }

    /// Square 0-1-2-3: the primary sits on one side of the access node, the
    /// backup on the other. Cutting the primary's node leaves the backup.
    #[test]
    fn backup_takes_over_when_primary_path_fails() {
        let mut net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 0.0;
        net.nodes[2].cpu_capacity = 0.0;
        let req = request(0, 0, 1, 1, 5, 0.0);
        let state = placed(&mut net, &req, Mechanism::FullyProtected);
        assert_eq!(state.instances[1].len(), 2);
        let mut s = clean(&net);
        let primary = state.instances[1][0];
        s.failed_links[net.link_between(0, primary).unwrap()] = true;
        assert!(evaluate_service_alive(&req, &state, &s, None));
        s.failed_nodes[state.instances[1][1]] = true;
        assert!(!evaluate_service_alive(&req, &state, &s, None));
    }

    #[test]
    fn activation_beyond_protected_capacity_is_lost() {
        let mut net = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0.99, 0.0);
        net.nodes[0].cpu_capacity = 0.0;
        net.nodes[2].cpu_capacity = 0.0;
        let req = request(0, 0, 1, 1, 5, 0.0);
        let state = placed(&mut net, &req, Mechanism::Shared);
        let backup = state.instances[1][1];
        let e = net.link_between(0, backup).unwrap();
        let mut s = clean(&net);
        s.failed_nodes[state.instances[1][0]] = true;
        let mut claims = ProtectedClaims::new(&net);
        assert!(evaluate_service_alive(&req, &state, &s, Some(&mut claims)));
        // A second activation on the same edge finds it nearly full.
        net.links[e].bw_protected = net.links[e].bw_capacity - 1.0;
        let mut claims = ProtectedClaims::new(&net);
        assert!(!evaluate_service_alive(&req, &state, &s, Some(&mut claims)));
    }

    /// One service on a node failing with probability q each step: the
    /// failure step is geometric with mean 1/q.
    #[test]
    fn single_node_failure_time_is_geometric() {
        let q = 0.05;
        let mut net = InfrastructureNetwork::new(vec![node(0, 16.0, 1.0), node(1, 16.0, 1.0 - q)], vec![crate::topology::fixtures::link(0, 1, 100.0, 0.0)]).unwrap();
        net.nodes[0].cpu_capacity = 0.0;
        net.access_nodes = [0].into();
        let req = request(0, 0, 1, 0, 100_000, 0.0);
        let runs = 10_000;
        let mut total = 0.0;
        let mut sq = 0.0;
        for seed in 0..runs {
            let scenario = Scenario {
                net: net.clone(),
                requests: vec![req.clone()],
                horizon: 2_000,
                fail_seed: seed,
                placement_seed: 0,
            };
            let r = run_scenario(&scenario, &PlacementConfig::default(), FailureMode::Remove);
            let at = r.cumulative_failures.iter().position(|&f| f == 1).expect("fails eventually") as f64 + 1.0;
            total += at;
            sq += at * at;
        }
        let n = runs as f64;
        let mean = total / n;
        let sd = ((sq / n - mean * mean) / n).sqrt();
        assert!((mean - 1.0 / q).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn high_load_node_fails_more_often() {
        let mut net = graph(2, &[(0, 1)], 1.0, 0.0);
        net.nodes[1].rel_low = 0.99;
        net.nodes[1].rel_high = 0.95;
        net.nodes[1].load_threshold = 0.5;
        let count = |net: &InfrastructureNetwork, seed| {
            (0..100_000u64)
                .filter(|&t| sample_failures(net, [], seed, t).failed_nodes[1])
                .count() as f64
        };
        let low = count(&net, 1);
        net.allocate_cpu(1, 12.0).unwrap();
        let high = count(&net, 2);
        for (got, p) in [(low, 0.01f64), (high, 0.05)] {
            let sd = (1e5 * p * (1.0 - p)).sqrt();
            assert!((got - 1e5 * p).abs() < 3.0 * sd, "{got} vs {p}");
        }
    }

    #[test]
    fn cumulative_failures_monotone_and_ledgers_restored() {
        for algorithm in Algorithm::ALL {
            let mut cfg = small_config(algorithm);
            cfg.topology.rel_high = (0.9, 0.95);
            cfg.topology.rel_low = (0.95, 0.99);
            if algorithm == Algorithm::SrpS {
                cfg.placement.mechanism = Mechanism::Shared;
            }
            let r = run_simulation(&cfg).unwrap();
            assert!(r.cumulative_failures.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(r.reliability_histogram.iter().sum::<u64>(), r.placements_succeeded);
            assert_eq!(r.placements_succeeded + r.placements_rejected, cfg.request_count as u64);
            assert!(r.residual_allocation < 1e-6, "{algorithm}: {}", r.residual_allocation);
        }
    }

    #[test]
    fn batch_is_deterministic() {
        let cfg = small_config(Algorithm::Srp);
        let a = run_batch(&cfg).unwrap();
        let b = run_batch(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 3);
    }

    #[test]
    fn shared_mechanism_reserves_less_protected_bandwidth() {
        let mut cfg = small_config(Algorithm::SrpS);
        cfg.repetitions = 1;
        let fully = run_simulation(&cfg).unwrap();
        cfg.placement.mechanism = Mechanism::Shared;
        let shared = run_simulation(&cfg).unwrap();
        assert!(shared.mean_bandwidth() < fully.mean_bandwidth());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SimConfig::default();
        cfg.request_count = 0;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
        let mut cfg = SimConfig::default();
        cfg.workload.cpu_scale = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.edge_prob = 0.0;
        assert!(cfg.validate().is_err());
    }
}
