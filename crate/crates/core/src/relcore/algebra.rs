//! Path reliability operators and the provenance-carrying value they act on.
//!
//! A value keeps its unreliability `1 - x` rather than `x`, so that sums of
//! near-one reliabilities and their inverses stay exact to rounding.

use crate::error::RelError;
use crate::pathfinding::Path;

/// One path and its reliability.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub path: Path,
    pub rel: f64,
}

/// A reliability together with the set of paths it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct RelValue {
    unrel: f64,
    terms: Vec<PathTerm>,
}

impl RelValue {
    pub fn zero() -> Self {
        Self {
            unrel: 1.0,
            terms: Vec::new(),
        }
    }

    /// Reliability 1 with empty provenance; neutral for [`op_times`].
    pub fn one() -> Self {
        Self {
            unrel: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            unrel: 1.0 - value,
            terms: Vec::new(),
        }
    }

    pub fn from_path(path: Path, rel: f64) -> Self {
        Self {
            unrel: 1.0 - rel,
            terms: vec![PathTerm { path, rel }],
        }
    }

    /// Combined reliability of independent alternatives: `1 - Π(1 - r_p)`.
    pub fn from_terms(terms: Vec<PathTerm>) -> Self {
        let unrel = terms.iter().map(|t| 1.0 - t.rel).product();
        Self { unrel, terms }
    }

    pub fn value(&self) -> f64 {
        1.0 - self.unrel
    }

    pub fn unreliability(&self) -> f64 {
        self.unrel
    }

    pub fn terms(&self) -> &[PathTerm] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<PathTerm> {
        self.terms
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.terms.iter().map(|t| &t.path)
    }

    /// Whether `value` agrees with `1 - Π(1 - r_p)` over the provenance.
    pub fn is_consistent(&self, tol: f64) -> bool {
        if self.terms.is_empty() {
            return true;
        }
        let expect: f64 = self.terms.iter().map(|t| 1.0 - t.rel).product();
        (expect - self.unrel).abs() <= tol
    }
}

pub fn plus(x: f64, y: f64) -> f64 {
    1.0 - (1.0 - x) * (1.0 - y)
}

/// `(x - y) / (1 - y)`, defined for `0 <= y < x <= 1`.
pub fn minus(x: f64, y: f64) -> Result<f64, RelError> {
    if !(0.0..1.0).contains(&y) || y >= x || x > 1.0 {
        return Err(RelError::MinusDomain { x, y });
    }
    Ok((x - y) / (1.0 - y))
}

pub fn op_plus(x: &RelValue, y: &RelValue) -> RelValue {
    let mut terms = x.terms.clone();
    for t in &y.terms {
        if !terms.iter().any(|s| s.path == t.path) {
            terms.push(t.clone());
        }
    }
    RelValue {
        unrel: x.unrel * y.unrel,
        terms,
    }
}

pub fn op_minus(x: &RelValue, y: f64) -> Result<RelValue, RelError> {
    let qy = 1.0 - y;
    if !(0.0..1.0).contains(&y) || x.unrel >= qy {
        return Err(RelError::MinusDomain { x: x.value(), y });
    }
    Ok(RelValue {
        unrel: x.unrel / qy,
        terms: x.terms.clone(),
    })
}

/// Concatenation of `p` then `q` when it forms a simple path.
pub fn concat(p: &Path, q: &Path) -> Option<Path> {
    if p.target() != q.source() {
        return None;
    }
    let mut nodes = p.nodes.clone();
    nodes.extend_from_slice(&q.nodes[1..]);
    let mut edges = p.edges.clone();
    edges.extend_from_slice(&q.edges);
    let path = Path::new(nodes, edges);
    path.is_simple().then_some(path)
}

/// Paths overlap when they cannot be merged into one simple path. Paths that
/// do not meet end to start overlap when they share any node or edge.
fn paths_overlap(p: &Path, q: &Path) -> bool {
    if p.target() == q.source() {
        concat(p, q).is_none()
    } else {
        p.nodes.iter().any(|n| q.nodes.contains(n)) || p.edges.iter().any(|e| q.edges.contains(e))
    }
}

/// Serial merge: zero when any path of `x` overlaps any path of `y`,
/// otherwise `xy` with every pairwise concatenation as provenance.
pub fn op_times(x: &RelValue, y: &RelValue) -> RelValue {
    let unrel = x.unrel + y.unrel - x.unrel * y.unrel;
    if x.terms.is_empty() || y.terms.is_empty() {
        let terms = if x.terms.is_empty() { &y.terms } else { &x.terms };
        return RelValue {
            unrel,
            terms: terms.clone(),
        };
    }
    let overlap = x
        .terms
        .iter()
        .any(|p| y.terms.iter().any(|q| paths_overlap(&p.path, &q.path)));
    if overlap {
        return RelValue::zero();
    }
    let mut terms = Vec::new();
    for p in &x.terms {
        for q in &y.terms {
            let path = concat(&p.path, &q.path).unwrap_or_else(|| p.path.clone());
            terms.push(PathTerm {
                path,
                rel: p.rel * q.rel,
            });
        }
    }
    RelValue { unrel, terms }
}
