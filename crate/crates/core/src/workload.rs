//! Service requests: microservice dependency DAGs with their demands,
//! deadlines and lifetimes, plus the random generators used by experiments.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::IteratorRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::WorkloadError;
use crate::pathfinding::Path;
use crate::rng::rng_from;
use crate::topology::{InfrastructureNetwork, NodeId};

/// Index 0 is the virtual access microservice, 1 is the root.
pub type MsId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microservice {
    pub id: MsId,
    /// Cores.
    pub cpu_demand: f64,
    /// Processing latency in ms.
    pub proc_latency: f64,
    /// Software failures per time unit.
    pub failure_rate: f64,
}

impl Microservice {
    pub fn access() -> Self {
        Self {
            id: 0,
            cpu_demand: 0.0,
            proc_latency: 0.0,
            failure_rate: 0.0,
        }
    }

    pub fn reliability(&self) -> f64 {
        software_reliability(self.failure_rate, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceLink {
    pub parent: MsId,
    pub child: MsId,
    /// MBps.
    pub bw_demand: f64,
    /// MB moved per invocation.
    pub data_volume: f64,
    /// Seconds.
    pub deadline: f64,
    pub failure_rate: f64,
}

impl MicroserviceLink {
    pub fn reliability(&self) -> f64 {
        software_reliability(self.failure_rate, 1.0)
    }

    /// Transmission time in seconds.
    pub fn transmission_latency(&self) -> f64 {
        if self.data_volume <= 0.0 {
            0.0
        } else if self.bw_demand <= 0.0 {
            f64::INFINITY
        } else {
            self.data_volume / self.bw_demand
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: usize,
    /// Element 0 is the access microservice.
    pub microservices: Vec<Microservice>,
    pub links: Vec<MicroserviceLink>,
    pub backup_limit: usize,
    /// Time units.
    pub lifetime: u32,
    pub arrival_time: f64,
    pub access_node: NodeId,
}

impl ServiceRequest {
    /// Number of real microservices (excluding the access one).
    pub fn real_count(&self) -> usize {
        self.microservices.len() - 1
    }

    pub fn parents_of(&self, m: MsId) -> Vec<MsId> {
        self.links
            .iter()
            .filter(|l| l.child == m)
            .map(|l| l.parent)
            .collect()
    }

    pub fn children_of(&self, m: MsId) -> Vec<MsId> {
        self.links
            .iter()
            .filter(|l| l.parent == m)
            .map(|l| l.child)
            .collect()
    }

    pub fn link_index(&self, parent: MsId, child: MsId) -> Option<usize> {
        self.links
            .iter()
            .position(|l| l.parent == parent && l.child == child)
    }

    /// Links touching `m` on either side.
    pub fn incident_links(&self, m: MsId) -> impl Iterator<Item = usize> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.parent == m || l.child == m)
            .map(|(i, _)| i)
    }

    /// Breadth-first order over real microservices starting at the root. A
    /// microservice is emitted only once all of its parents have been.
    pub fn bfs_order(&self) -> Vec<MsId> {
        let n = self.microservices.len();
        let mut pending: Vec<usize> = (0..n).map(|m| self.parents_of(m).len()).collect();
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([0usize]);
        while let Some(m) = queue.pop_front() {
            if m != 0 {
                order.push(m);
            }
            for c in self.children_of(m) {
                pending[c] -= 1;
                if pending[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        order
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |reason: &str| WorkloadError::InvalidRequest {
            id: self.id,
            reason: reason.to_string(),
        };
        let n = self.microservices.len();
        if n < 2 {
            return Err(bad("needs at least one real microservice"));
        }
        if self.microservices[0].cpu_demand != 0.0 {
            return Err(bad("access microservice must not consume CPU"));
        }
        if self.parents_of(1) != vec![0] {
            return Err(bad("root must have the access microservice as sole parent"));
        }
        for l in &self.links {
            if l.parent == l.child || l.parent >= n || l.child >= n {
                return Err(bad("malformed link"));
            }
            if l.child == 0 || (l.parent == 0 && l.child != 1) {
                return Err(bad("access microservice only feeds the root"));
            }
            if l.parent != 0 && (l.bw_demand <= 0.0 || l.data_volume <= 0.0 || l.deadline <= 0.0) {
                return Err(bad("non-positive link demand"));
            }
        }
        if self.bfs_order().len() != self.real_count() {
            return Err(bad("graph is cyclic or has unreachable microservices"));
        }
        if self.backup_limit > self.real_count() {
            return Err(bad("backup limit exceeds microservice count"));
        }
        if self.lifetime < 1 {
            return Err(bad("lifetime must be at least one time unit"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupMode {
    /// One backup allowance per microservice.
    Full,
    /// Uniform in `1..=|M|`.
    Random,
    Fixed(usize),
}

/// Sampling ranges for requests. Pairs are inclusive `[lo, hi]`; the two
/// scale factors multiply sampled CPU and bandwidth demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadRanges {
    pub microservice_count: (usize, usize),
    pub cpu_demand: (f64, f64),
    pub data_volume: (f64, f64),
    pub proc_latency: (f64, f64),
    pub bw_demand: (f64, f64),
    pub deadline: (f64, f64),
    pub lifetime: (u32, u32),
    pub microservice_failure_rate: f64,
    pub link_failure_rate: f64,
    pub backup_mode: BackupMode,
    /// Probability of an extra parent edge per microservice beyond the tree.
    pub cross_edge_prob: f64,
    pub cpu_scale: f64,
    pub bw_scale: f64,
}

impl Default for WorkloadRanges {
    fn default() -> Self {
        Self {
            microservice_count: (1, 5),
            cpu_demand: (0.1, 1.0),
            data_volume: (0.1, 5.0),
            proc_latency: (10.0, 50.0),
            bw_demand: (0.1, 10.0),
            deadline: (0.03, 50.15),
            lifetime: (1, 100),
            microservice_failure_rate: 0.00001,
            link_failure_rate: 0.00001,
            backup_mode: BackupMode::Full,
            cross_edge_prob: 0.0,
            cpu_scale: 1.0,
            bw_scale: 1.0,
        }
    }
}

fn draw<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Samples one request: a random tree rooted at the root microservice (each
/// microservice `j >= 2` hangs off a uniformly chosen earlier one), optional
/// cross edges, and demands drawn from `ranges`. `id` and `arrival_time` are
/// left at zero.
pub fn generate_request<R: Rng>(
    ranges: &WorkloadRanges,
    access_nodes: &BTreeSet<NodeId>,
    rng: &mut R,
) -> Result<ServiceRequest, WorkloadError> {
    if access_nodes.is_empty() {
        return Err(WorkloadError::NoAccessNodes);
    }
    let (lo, hi) = ranges.microservice_count;
    let count = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
    let mut microservices = vec![Microservice::access()];
    for id in 1..=count {
        microservices.push(Microservice {
            id,
            cpu_demand: draw(rng, ranges.cpu_demand) * ranges.cpu_scale,
            proc_latency: draw(rng, ranges.proc_latency),
            failure_rate: ranges.microservice_failure_rate,
        });
    }
    let mut edges = vec![(0, 1)];
    for j in 2..=count {
        edges.push((rng.random_range(1..j), j));
    }
    if ranges.cross_edge_prob > 0.0 {
        for j in 3..=count {
            if rng.random::<f64>() < ranges.cross_edge_prob {
                let extra = (1..j)
                    .filter(|i| !edges.contains(&(*i, j)))
                    .choose(rng);
                if let Some(i) = extra {
                    edges.push((i, j));
                }
            }
        }
    }
    let links = edges
        .into_iter()
        .map(|(parent, child)| MicroserviceLink {
            parent,
            child,
            bw_demand: draw(rng, ranges.bw_demand) * ranges.bw_scale,
            data_volume: draw(rng, ranges.data_volume),
            deadline: draw(rng, ranges.deadline),
            failure_rate: ranges.link_failure_rate,
        })
        .collect();
    let backup_limit = match ranges.backup_mode {
        BackupMode::Full => count,
        BackupMode::Random => rng.random_range(1..=count),
        BackupMode::Fixed(b) => b.min(count),
    };
    let (llo, lhi) = ranges.lifetime;
    let lifetime = rng.random_range(llo.max(1)..=lhi.max(llo.max(1)));
    let access_node = *access_nodes
        .iter()
        .choose(rng)
        .expect("access set checked non-empty");
    Ok(ServiceRequest {
        id: 0,
        microservices,
        links,
        backup_limit,
        lifetime,
        arrival_time: 0.0,
        access_node,
    })
}

pub fn generate_request_seeded(
    ranges: &WorkloadRanges,
    access_nodes: &BTreeSet<NodeId>,
    rng_seed: u64,
) -> Result<ServiceRequest, WorkloadError> {
    generate_request(ranges, access_nodes, &mut rng_from(rng_seed, &[0x7e_9a]))
}

/// Poisson arrival process: cumulative sums of exponential gaps.
pub fn generate_arrivals(count: usize, rate: f64, rng_seed: u64) -> Vec<f64> {
    let mut rng = rng_from(rng_seed, &[0xa2_71]);
    let exp = Exp::new(rate).expect("arrival rate must be positive");
    let mut t = 0.0;
    (0..count)
        .map(|_| {
            t += exp.sample(&mut rng);
            t
        })
        .collect()
}

/// A full request stream with ids `0..count` and Poisson arrivals.
pub fn generate_workload(
    count: usize,
    rate: f64,
    ranges: &WorkloadRanges,
    access_nodes: &BTreeSet<NodeId>,
    rng_seed: u64,
) -> Result<Vec<ServiceRequest>, WorkloadError> {
    let arrivals = generate_arrivals(count, rate, rng_seed);
    let mut rng = rng_from(rng_seed, &[0x5e_11]);
    arrivals
        .into_iter()
        .enumerate()
        .map(|(id, t)| {
            let mut r = generate_request(ranges, access_nodes, &mut rng)?;
            r.id = id;
            r.arrival_time = t;
            Ok(r)
        })
        .collect()
}

/// End-to-end latency (s) of a link routed over `placed_paths`: transmission
/// plus the fastest path's propagation plus the child's processing time.
pub fn link_latency(
    net: &InfrastructureNetwork,
    link: &MicroserviceLink,
    placed_paths: &[Path],
    child_proc_latency: f64,
) -> Result<f64, WorkloadError> {
    let fastest = placed_paths
        .iter()
        .map(|p| p.latency_ms(net))
        .min_by(f64::total_cmp)
        .ok_or(WorkloadError::EmptyPathSet)?;
    Ok(link.transmission_latency() + (fastest + child_proc_latency) / 1000.0)
}

/// Survival probability of a Poisson failure process over `horizon`.
pub fn software_reliability(failure_rate: f64, horizon: f64) -> f64 {
    (-failure_rate * horizon).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::fixtures::graph;

    fn access() -> BTreeSet<NodeId> {
        BTreeSet::from([0, 3, 7])
    }

    #[test]
    fn single_microservice_request_is_one_link() {
        let ranges = WorkloadRanges {
            microservice_count: (1, 1),
            ..Default::default()
        };
        let r = generate_request_seeded(&ranges, &access(), 4).unwrap();
        assert_eq!(r.real_count(), 1);
        assert_eq!(r.links.len(), 1);
        assert_eq!((r.links[0].parent, r.links[0].child), (0, 1));
        r.validate().unwrap();
    }

    #[test]
    fn same_seed_same_request() {
        let a = generate_request_seeded(&WorkloadRanges::default(), &access(), 9).unwrap();
        let b = generate_request_seeded(&WorkloadRanges::default(), &access(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_access_set_rejected() {
        let r = generate_request_seeded(&WorkloadRanges::default(), &BTreeSet::new(), 1);
        assert_eq!(r, Err(WorkloadError::NoAccessNodes));
    }

    #[test]
    fn generated_requests_are_valid_dags_within_ranges() {
        let ranges = WorkloadRanges {
            cross_edge_prob: 0.5,
            ..Default::default()
        };
        let reqs = generate_workload(10_000, 1.0, &ranges, &access(), 17).unwrap();
        let mut total = 0usize;
        for r in &reqs {
            r.validate().unwrap();
            assert_eq!(r.bfs_order().len(), r.real_count());
            assert!(r.backup_limit <= r.real_count());
            assert!((1..=100).contains(&r.lifetime));
            assert!(access().contains(&r.access_node));
            for m in &r.microservices[1..] {
                assert!((0.1..=1.0).contains(&m.cpu_demand));
                assert!((10.0..=50.0).contains(&m.proc_latency));
            }
            for l in &r.links {
                assert!((0.1..=10.0).contains(&l.bw_demand));
                assert!((0.1..=5.0).contains(&l.data_volume));
                assert!((0.03..=50.15).contains(&l.deadline));
            }
            total += r.real_count();
        }
        // U{1..5}: mean 3, variance 2.
        let mean = total as f64 / reqs.len() as f64;
        let sigma = (2.0 / reqs.len() as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn random_backup_mode_stays_in_bounds() {
        let ranges = WorkloadRanges {
            backup_mode: BackupMode::Random,
            ..Default::default()
        };
        for r in generate_workload(500, 1.0, &ranges, &access(), 2).unwrap() {
            assert!((1..=r.real_count()).contains(&r.backup_limit));
        }
    }

    #[test]
    fn arrivals_are_cumulative_with_exponential_gaps() {
        let reps = 400;
        let mut last = Vec::new();
        for s in 0..reps {
            let a = generate_arrivals(100, 1.0, s);
            assert!(a.windows(2).all(|w| w[0] <= w[1]));
            last.push(*a.last().unwrap());
        }
        let mean = last.iter().sum::<f64>() / reps as f64;
        // Gamma(100, 1): sd 10 per run.
        assert!((mean - 100.0).abs() < 3.0 * 10.0 / (reps as f64).sqrt(), "mean {mean}");

        let fast: f64 = (0..reps)
            .map(|s| *generate_arrivals(100, 2.0, s).last().unwrap())
            .sum::<f64>()
            / reps as f64;
        assert!((fast - 50.0).abs() < 3.0 * 5.0 / (reps as f64).sqrt(), "mean {fast}");
        assert_eq!(generate_arrivals(1, 1.0, 3).len(), 1);
    }

    fn net_link() -> (InfrastructureNetwork, MicroserviceLink) {
        let mut net = graph(4, &[(0, 1), (1, 2), (0, 3), (3, 2)], 1.0, 0.0);
        net.links[0].prop_delay = 2.0;
        net.links[1].prop_delay = 3.0;
        net.links[2].prop_delay = 10.0;
        net.links[3].prop_delay = 10.0;
        let l = MicroserviceLink {
            parent: 1,
            child: 2,
            bw_demand: 1.0,
            data_volume: 1.0,
            deadline: 5.0,
            failure_rate: 0.0,
        };
        (net, l)
    }

    #[test]
    fn latency_uses_fastest_path() {
        let (net, mut l) = net_link();
        let short = Path::new(vec![0, 1, 2], vec![0, 1]);
        let long = Path::new(vec![0, 3, 2], vec![2, 3]);
        let single = link_latency(&net, &l, &[short.clone()], 10.0).unwrap();
        assert!((single - 1.015).abs() < 1e-12);
        let both = link_latency(&net, &l, &[long.clone(), short.clone()], 10.0).unwrap();
        assert!((both - 1.015).abs() < 1e-12);
        l.data_volume = 0.0;
        let no_data = link_latency(&net, &l, &[long], 10.0).unwrap();
        assert!((no_data - 0.030).abs() < 1e-12);
        assert_eq!(link_latency(&net, &l, &[], 10.0), Err(WorkloadError::EmptyPathSet));
    }

    #[test]
    fn software_reliability_values() {
        assert_eq!(software_reliability(0.0, 1.0), 1.0);
        assert!((software_reliability(0.00001, 1.0) - 0.99999000005).abs() < 1e-11);
        let one = software_reliability(0.3, 1.0);
        assert!((software_reliability(0.3, 2.0) - one * one).abs() < 1e-15);
    }
}
