//! Path reliability matrices.
//!
//! The one-step matrix holds, for each link `(i, j)`, the reliability of the
//! source node times the link. Powers enumerate simple paths of a fixed hop
//! count; addition merges lengths while keeping only internally disjoint
//! paths, scanned shortest first and then in lexicographic node order.

use std::collections::BTreeSet;

use crate::error::RelError;
use crate::pathfinding::Path;
use crate::topology::{InfrastructureNetwork, NodeId};

use super::algebra::{concat, PathTerm, RelValue};

#[derive(Debug, Clone, PartialEq)]
pub struct PathRelMatrix {
    order: usize,
    entries: Vec<RelValue>,
}

impl PathRelMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            entries: vec![RelValue::zero(); order * order],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> &RelValue {
        &self.entries[i * self.order + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: RelValue) {
        self.entries[i * self.order + j] = v;
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).value()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.value(i, j)).collect())
            .collect()
    }

    fn check_order(&self, other: &Self) -> Result<(), RelError> {
        if self.order == other.order {
            Ok(())
        } else {
            Err(RelError::OrderMismatch(self.order, other.order))
        }
    }
}

/// One-step matrix `R`: entry `(i, j)` is `r_i · r_e` for link `e = (i, j)`.
pub fn one_step(net: &InfrastructureNetwork) -> PathRelMatrix {
    let n = net.node_count();
    let mut m = PathRelMatrix::zeros(n);
    for (id, link) in net.links.iter().enumerate() {
        let (u, v) = link.endpoints;
        let r_e = net.link_reliability(id);
        m.set(u, v, RelValue::from_path(Path::new(vec![u, v], vec![id]), net.node_reliability(u) * r_e));
        m.set(v, u, RelValue::from_path(Path::new(vec![v, u], vec![id]), net.node_reliability(v) * r_e));
    }
    m
}

/// `A ∧ B`: every simple concatenation of a path in `a_in` with a path in
/// `b_nj`, accumulated with ⊕. The diagonal is zero.
pub fn mat_mul(a: &PathRelMatrix, b: &PathRelMatrix) -> Result<PathRelMatrix, RelError> {
    a.check_order(b)?;
    let n = a.order;
    let mut c = PathRelMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut terms: Vec<PathTerm> = Vec::new();
            for k in 0..n {
                let (x, y) = (a.get(i, k), b.get(k, j));
                for p in x.terms() {
                    for q in y.terms() {
                        let Some(path) = concat(&p.path, &q.path) else {
                            continue;
                        };
                        if !terms.iter().any(|t| t.path == path) {
                            terms.push(PathTerm {
                                path,
                                rel: p.rel * q.rel,
                            });
                        }
                    }
                }
            }
            if !terms.is_empty() {
                c.set(i, j, RelValue::from_terms(terms));
            }
        }
    }
    Ok(c)
}

fn internally_disjoint(p: &Path, q: &Path) -> bool {
    p != q && !p.overlaps_internally(q)
}

fn canonical(terms: &[PathTerm]) -> Vec<&PathTerm> {
    let mut v: Vec<&PathTerm> = terms.iter().collect();
    v.sort_by(|a, b| {
        a.path
            .hops()
            .cmp(&b.path.hops())
            .then_with(|| a.path.nodes.cmp(&b.path.nodes))
    });
    v
}

/// `A ∨ B`: keeps `a_ij` and adds each path of `b_ij` that is internally
/// disjoint from everything kept so far.
pub fn mat_add(a: &PathRelMatrix, b: &PathRelMatrix) -> Result<PathRelMatrix, RelError> {
    a.check_order(b)?;
    let n = a.order;
    let mut c = a.clone();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (a.get(i, j), b.get(i, j));
            if y.terms().is_empty() {
                if y.value() > 0.0 {
                    c.set(i, j, super::algebra::op_plus(x, y));
                }
                continue;
            }
            let mut kept: Vec<PathTerm> = x.terms().to_vec();
            let before = kept.len();
            for t in canonical(y.terms()) {
                if kept.iter().all(|k| internally_disjoint(&k.path, &t.path)) {
                    kept.push(t.clone());
                }
            }
            if kept.len() > before {
                c.set(i, j, RelValue::from_terms(kept));
            }
        }
    }
    Ok(c)
}

/// `R^(1) … R^(k)`.
pub fn path_powers(net: &InfrastructureNetwork, k: usize) -> Vec<PathRelMatrix> {
    let r = one_step(net);
    let mut out = vec![r.clone()];
    for _ in 1..k {
        let next = mat_mul(out.last().expect("non-empty"), &r).expect("same order");
        out.push(next);
    }
    out
}

/// Path reliability with the source removed: interior nodes (minus any in
/// `excluded`) times every edge.
pub fn stripped_path_reliability(
    net: &InfrastructureNetwork,
    path: &Path,
    excluded: Option<&BTreeSet<NodeId>>,
) -> f64 {
    let nodes: f64 = path
        .interior()
        .iter()
        .filter(|n| excluded.is_none_or(|c| !c.contains(n)))
        .map(|&n| net.node_reliability(n))
        .product();
    let edges: f64 = path.edges.iter().map(|&e| net.link_reliability(e)).product();
    nodes * edges
}

/// Network-aware reliability matrix over internally disjoint paths of at
/// most `k` hops, optionally treating `critical` nodes as perfect. The
/// diagonal is 1.
pub fn network_reliability_matrix(
    net: &InfrastructureNetwork,
    k: usize,
    critical: Option<&BTreeSet<NodeId>>,
) -> PathRelMatrix {
    let n = net.node_count();
    let powers = path_powers(net, k.max(1));
    let mut acc = powers[0].clone();
    for p in &powers[1..] {
        acc = mat_add(&acc, p).expect("same order");
    }
    let mut out = PathRelMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                out.set(i, j, RelValue::one());
                continue;
            }
            let terms: Vec<PathTerm> = acc
                .get(i, j)
                .terms()
                .iter()
                .map(|t| PathTerm {
                    rel: stripped_path_reliability(net, &t.path, critical),
                    path: t.path.clone(),
                })
                .collect();
            if !terms.is_empty() {
                out.set(i, j, RelValue::from_terms(terms));
            }
        }
    }
    out
}
