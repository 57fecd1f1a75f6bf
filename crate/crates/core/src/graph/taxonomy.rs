use crate::error::{Error, Result};
use crate::graph::ClassIndex;
use crate::tensor::SparseAdjacency;

/// A `parent → child` taxonomy link, with the 1-based source line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyEdge {
    pub parent: String,
    pub child: String,
    pub line: usize,
}

impl TaxonomyEdge {
    pub fn new(parent: impl Into<String>, child: impl Into<String>, line: usize) -> Self {
        Self {
            parent: parent.into(),
            child: child.into(),
            line,
        }
    }
}

/// Undirected binary adjacency of the taxonomy plus a self-loop on every node.
/// Repeated edges collapse to one.
pub fn load_taxonomy(edges: &[TaxonomyEdge], index: &ClassIndex) -> Result<SparseAdjacency> {
    let n = index.len();
    let mut coords: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for e in edges {
        let lookup = |id: &str| {
            index.position(id).ok_or_else(|| Error::UnknownId {
                line: e.line,
                id: id.to_string(),
            })
        };
        let p = lookup(&e.parent)?;
        let c = lookup(&e.child)?;
        if p == c {
            return Err(Error::Config(format!(
                "line {}: self-edge on `{}`",
                e.line, e.parent
            )));
        }
        coords.push((p, c));
        coords.push((c, p));
    }
    SparseAdjacency::from_pattern(n, coords)
}
