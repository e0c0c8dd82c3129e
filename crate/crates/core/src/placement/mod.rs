//! Placement of service requests onto the network: the reliability-aware
//! algorithms, their shared-path variant, and the benchmark heuristics.

pub mod active;
pub mod benchmarks;
pub mod routing;
pub mod sprc;
pub mod srp;
pub mod state;

use serde::{Deserialize, Serialize};

use crate::relcore::{critical_nodes, instance_reliability, microservice_reliability, service_reliability, ModelOptions};
use crate::topology::{InfrastructureNetwork, NodeId};
use crate::workload::{MsId, ServiceRequest};

pub use active::{SharedIndex, SharedUse};
pub use routing::{CandidatePlan, RoutePolicy};
pub use state::{Mechanism, PlacementState, Route, RouteKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SRP")]
    Srp,
    #[serde(rename = "SRP-S")]
    SrpS,
    #[serde(rename = "DAIP")]
    Daip,
    #[serde(rename = "RRSP")]
    Rrsp,
    #[serde(rename = "Grd")]
    Grd,
    #[serde(rename = "Grd-B")]
    GrdB,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Srp,
        Algorithm::SrpS,
        Algorithm::Daip,
        Algorithm::Rrsp,
        Algorithm::Grd,
        Algorithm::GrdB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Srp => "SRP",
            Algorithm::SrpS => "SRP-S",
            Algorithm::Daip => "DAIP",
            Algorithm::Rrsp => "RRSP",
            Algorithm::Grd => "Grd",
            Algorithm::GrdB => "Grd-B",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub algorithm: Algorithm,
    pub mechanism: Mechanism,
    /// Longest path considered between two instances, in hops.
    pub max_path_len: usize,
    pub backtrack_limit: usize,
    pub rrsp_candidates: usize,
    pub sprc_literal: bool,
    /// Keep a backup off nodes already hosting an instance of the same
    /// microservice.
    pub backup_anti_affinity: bool,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Srp,
            mechanism: Mechanism::FullyProtected,
            max_path_len: 4,
            backtrack_limit: 3,
            rrsp_candidates: 50,
            sprc_literal: false,
            backup_anti_affinity: true,
        }
    }
}

/// What a placement may see of the rest of the world.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlacementContext<'a> {
    /// Shared links of services already running.
    pub shared: Option<&'a SharedIndex>,
    /// Seed for randomized heuristics.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementOutcome {
    pub state: PlacementState,
    pub success: bool,
    /// Service reliability at the loads right after placement.
    pub reliability: Option<f64>,
}

/// Places `request` with the configured algorithm. On failure every
/// reservation is rolled back and the returned state holds only the access
/// microservice.
pub fn place_request(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    cfg: &PlacementConfig,
    ctx: PlacementContext<'_>,
) -> PlacementOutcome {
    let mut state = PlacementState::new(request, cfg.mechanism);
    let ok = match cfg.algorithm {
        Algorithm::Srp => srp::place(net, request, &mut state, cfg, ctx, false),
        Algorithm::SrpS => srp::place(net, request, &mut state, cfg, ctx, true),
        Algorithm::Daip => benchmarks::daip(net, request, &mut state, cfg),
        Algorithm::Rrsp => benchmarks::rrsp(net, request, &mut state, cfg, ctx.seed),
        Algorithm::Grd => benchmarks::grd(net, request, &mut state, cfg, false),
        Algorithm::GrdB => benchmarks::grd(net, request, &mut state, cfg, true),
    };
    if !ok {
        state.release_all(net, request);
        return PlacementOutcome {
            state,
            success: false,
            reliability: None,
        };
    }
    let reliability = service_reliability(net, request, &state).ok();
    PlacementOutcome {
        state,
        success: true,
        reliability,
    }
}

/// Nodes with room for an instance of `m`, outside its blacklist and, for a
/// backup under anti-affinity, off nodes already hosting `m`.
pub(crate) fn candidate_nodes(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &PlacementState,
    m: MsId,
    cfg: &PlacementConfig,
) -> Vec<NodeId> {
    let demand = request.microservices[m].cpu_demand;
    let backup = state.is_placed(m);
    (0..net.node_count())
        .filter(|&n| !state.blacklist[m].contains(&n))
        .filter(|&n| !(backup && cfg.backup_anti_affinity && state.instances[m].contains(&n)))
        .filter(|&n| net.nodes[n].cpu_residual() + crate::topology::LEDGER_EPS >= demand)
        .collect()
}

/// Reserves a planned instance and records its reliability. Leaves the
/// state untouched and returns `false` if the reservation fails or loses the
/// connectivity the plan promised.
pub(crate) fn commit(
    net: &mut InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    m: MsId,
    plan: CandidatePlan,
) -> bool {
    let node = plan.node;
    let Ok(b) = state.add_instance(net, request, m, node, plan.into_routes()) else {
        return false;
    };
    if !routing::instance_connected(request, state, m, b) {
        state.remove_last_instance(net, request, m);
        return false;
    }
    record_sigma(net, request, state, m, b);
    true
}

/// Stores `σ_m` and the new instance's own reliability (node included).
pub(crate) fn record_sigma(
    net: &InfrastructureNetwork,
    request: &ServiceRequest,
    state: &mut PlacementState,
    m: MsId,
    b: usize,
) {
    let node_rel = net.node_reliabilities();
    let critical = critical_nodes(state);
    let opts = ModelOptions::default();
    let sigma = microservice_reliability(net, request, state, &node_rel, &critical, m, opts).unwrap_or(0.0);
    let inst = instance_reliability(net, request, state, &node_rel, &critical, m, b, opts).unwrap_or(0.0);
    state.recorded_sigma[m][b] = sigma;
    state.instance_sigma[m][b] = node_rel[state.instances[m][b]] * inst;
}

/// Round-robin backup allocation over `order`: each turn gives the next
/// microservice in rotation one backup through `place`; a microservice whose
/// placement fails leaves the rotation.
pub(crate) fn round_robin_backups(
    request: &ServiceRequest,
    order: &[MsId],
    mut place: impl FnMut(MsId) -> bool,
) {
    let mut rotation: Vec<MsId> = order.to_vec();
    let mut placed = 0;
    let mut i = 0;
    while placed < request.backup_limit && !rotation.is_empty() {
        i %= rotation.len();
        if place(rotation[i]) {
            placed += 1;
            i += 1;
        } else {
            rotation.remove(i);
        }
    }
}
