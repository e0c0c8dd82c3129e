//! Shared path reliability: penalizes candidate paths whose edges carry
//! shared backup links that could claim the protected pool first.

use std::collections::{BTreeMap, BTreeSet};

use crate::pathfinding::Path;
use crate::relcore::path_set_reliability;
use crate::topology::{InfrastructureNetwork, LinkId, Pool};

use super::active::{Owner, SharedIndex, SharedUse};

/// Contention view over the active placements plus the request in progress.
pub struct Contention<'a> {
    pub index: Option<&'a SharedIndex>,
    pub local: Vec<(LinkId, SharedUse)>,
    /// Read the pseudocode literally: multiply by the summed inactivation
    /// probabilities of contenders instead of one minus their activation.
    pub literal: bool,
}

impl Contention<'_> {
    /// Backup owners whose activation on some edge of `path` would leave no
    /// protected headroom for a new link of `new_bw`, with their activation
    /// probabilities.
    pub fn contenders(&self, net: &InfrastructureNetwork, path: &Path, new_bw: f64) -> BTreeMap<Owner, f64> {
        let mut out = BTreeMap::new();
        for &e in &path.edges {
            let cap = net.pool_limit(e, Pool::Protected);
            let used = net.pool_allocated(e, Pool::Protected);
            let global = self.index.map_or(&[][..], |i| i.uses(e));
            let local = self.local.iter().filter(|(le, _)| *le == e).map(|(_, u)| u);
            for u in global.iter().chain(local) {
                if cap < used + u.bw + new_bw {
                    out.insert(u.owner, u.activation);
                }
            }
        }
        out
    }

    /// Multiplier applied to a path's reliability.
    pub fn path_factor(&self, net: &InfrastructureNetwork, path: &Path, new_bw: f64) -> f64 {
        let c = self.contenders(net, path, new_bw);
        let f = if self.literal {
            c.values().map(|a| 1.0 - a).sum::<f64>()
        } else {
            1.0 - c.values().sum::<f64>()
        };
        f.clamp(0.0, 1.0)
    }

    /// Total reliability of a path set after the contention penalty.
    pub fn path_set_reliability(
        &self,
        net: &InfrastructureNetwork,
        node_rel: &[f64],
        paths: &[Path],
        new_bw: f64,
    ) -> f64 {
        let none = BTreeSet::new();
        let q: f64 = paths
            .iter()
            .map(|p| {
                let r = path_set_reliability(net, node_rel, std::slice::from_ref(p), &none);
                1.0 - self.path_factor(net, p, new_bw) * r
            })
            .product();
        1.0 - q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::fixtures::graph;

    fn use_of(owner: usize, bw: f64, activation: f64) -> SharedUse {
        SharedUse {
            owner: (owner, 1, 1),
            bw,
            activation,
        }
    }

    #[test]
    fn no_contenders_leaves_paths_alone() {
        let net = graph(3, &[(0, 1), (1, 2)], 0.99, 0.0);
        let c = Contention {
            index: None,
            local: Vec::new(),
            literal: false,
        };
        let p = Path::new(vec![0, 1, 2], vec![0, 1]);
        assert_eq!(c.path_factor(&net, &p, 5.0), 1.0);
        let r = c.path_set_reliability(&net, &net.node_reliabilities(), &[p], 5.0);
        assert!((r - 0.99).abs() < 1e-12);
    }

    #[test]
    fn single_contender_scales_by_inactivity() {
        let mut net = graph(3, &[(0, 1), (1, 2)], 0.99, 0.0);
        net.allocate_bandwidth(1, 95.0, Pool::Protected).unwrap();
        let mut index = SharedIndex::new(2);
        index.per_edge_mut_for_tests(1).push(use_of(7, 4.0, 0.001));
        let c = Contention {
            index: Some(&index),
            local: Vec::new(),
            literal: false,
        };
        let p = Path::new(vec![0, 1, 2], vec![0, 1]);
        let r = c.path_set_reliability(&net, &net.node_reliabilities(), &[p.clone()], 2.0);
        assert!((r - 0.999 * 0.99).abs() < 1e-12);
        // Enough protected headroom for both links: no penalty.
        assert_eq!(c.path_factor(&net, &p, 0.5), 1.0);
    }

    #[test]
    fn literal_mode_zeroes_uncontended_paths() {
        let net = graph(2, &[(0, 1)], 0.99, 0.0);
        let c = Contention {
            index: None,
            local: Vec::new(),
            literal: true,
        };
        assert_eq!(c.path_factor(&net, &Path::new(vec![0, 1], vec![0]), 1.0), 0.0);
    }
}
