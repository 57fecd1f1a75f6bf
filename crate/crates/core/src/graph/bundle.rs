use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::knn::{self, nearest};
use crate::graph::EmbeddingTable;
use crate::tensor::{DenseMatrix, SparseAdjacency};

/// Adjacency normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// `D⁻¹ C`
    #[default]
    RandomWalk,
    /// `D^{-1/2} C D^{-1/2}`
    Sym,
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::RandomWalk => "random_walk",
            NormMode::Sym => "sym",
        })
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rw" | "random_walk" | "non-sym" => Ok(NormMode::RandomWalk),
            "sym" => Ok(NormMode::Sym),
            other => Err(Error::Config(format!(
                "unknown normalization `{other}` (expected sym or rw)"
            ))),
        }
    }
}

/// How overlapping entries of the taxonomy and k-NN graphs combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// Union of patterns, every value 1.
    #[default]
    Binary,
    /// Literal matrix sum; entries present in both become 2.
    Sum,
}

/// `C = A + B` with entries clipped to 1.
pub fn merge_graphs(a: &SparseAdjacency, b: &SparseAdjacency) -> Result<SparseAdjacency> {
    merge_graphs_with(a, b, MergeRule::Binary)
}

pub fn merge_graphs_with(
    a: &SparseAdjacency,
    b: &SparseAdjacency,
    rule: MergeRule,
) -> Result<SparseAdjacency> {
    if a.n() != b.n() {
        return Err(Error::shape("merge_graphs", (a.n(), a.n()), (b.n(), b.n())));
    }
    match rule {
        MergeRule::Binary => SparseAdjacency::from_pattern(a.n(), a.pattern().into_iter().chain(b.pattern())),
        MergeRule::Sum => SparseAdjacency::from_triplets(a.n(), a.triplets().chain(b.triplets()).collect()),
    }
}

/// Normalizes by row sums (degrees) of `c`.
pub fn normalize_adjacency(c: &SparseAdjacency, mode: NormMode) -> Result<SparseAdjacency> {
    let deg = c.row_sums();
    if let Some(r) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::Invariant(format!("row {r} has zero degree")));
    }
    Ok(match mode {
        NormMode::RandomWalk => c.map_values(|r, _, v| v / deg[r]),
        NormMode::Sym => c.map_values(|r, col, v| v / (deg[r] * deg[col]).sqrt()),
    })
}

/// Taxonomy graph, k-NN graph, their merge, and the normalized merge.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub a: SparseAdjacency,
    pub b: SparseAdjacency,
    pub c: SparseAdjacency,
    pub a_hat: SparseAdjacency,
    pub norm_mode: NormMode,
    pub merge_rule: MergeRule,
    pub k: usize,
    pub alpha: f64,
}

impl GraphBundle {
    /// Semantic-enhanced graph: taxonomy `a` plus the thresholded k-NN graph of `embeddings`.
    pub fn build(
        a: SparseAdjacency,
        embeddings: &DenseMatrix,
        k: usize,
        alpha: f64,
        norm_mode: NormMode,
    ) -> Result<Self> {
        if embeddings.rows() != a.n() {
            return Err(Error::shape("GraphBundle::build", (a.n(), a.n()), embeddings.shape()));
        }
        let b = knn::knn_graph(embeddings, k, alpha)?;
        Self::assemble(a, b, k, alpha, norm_mode, MergeRule::Binary)
    }

    /// Taxonomy-only graph (`B` empty), for ablations.
    pub fn taxonomy_only(a: SparseAdjacency, norm_mode: NormMode) -> Result<Self> {
        let b = SparseAdjacency::empty(a.n());
        Self::assemble(a, b, 0, 0.0, norm_mode, MergeRule::Binary)
    }

    pub fn assemble(
        a: SparseAdjacency,
        b: SparseAdjacency,
        k: usize,
        alpha: f64,
        norm_mode: NormMode,
        merge_rule: MergeRule,
    ) -> Result<Self> {
        let c = merge_graphs_with(&a, &b, merge_rule)?;
        let a_hat = normalize_adjacency(&c, norm_mode)?;
        Ok(Self {
            a,
            b,
            c,
            a_hat,
            norm_mode,
            merge_rule,
            k,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// Same graphs under a different normalization.
    pub fn renormalized(&self, mode: NormMode) -> Result<Self> {
        let mut out = self.clone();
        out.a_hat = normalize_adjacency(&self.c, mode)?;
        out.norm_mode = mode;
        Ok(out)
    }

    /// Nodes with no neighbour other than themselves in `C`.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.c.row(i).all(|(j, _)| j == i))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Insertion {
    pub bundle: GraphBundle,
    pub table: EmbeddingTable,
    /// Index assigned to the new class (always the old node count).
    pub node: usize,
    /// Existing nodes the new class was linked to in `B`.
    pub neighbors: Vec<usize>,
}

/// Adds an unseen class without rebuilding the graph.
///
/// The new node gets a self-loop in `A` and is linked in `B` to at most `k` of
/// its nearest existing nodes lying within `alpha`. Existing indices and edges
/// are unchanged. A node with no neighbour in range joins with only its
/// self-loop and a warning is logged.
pub fn insert_category(
    bundle: &GraphBundle,
    table: &EmbeddingTable,
    name: &str,
    vector: &[f64],
    k: usize,
    alpha: f64,
) -> Result<Insertion> {
    let n = bundle.n();
    if table.index.len() != n {
        return Err(Error::shape("insert_category", (n, n), table.vectors.shape()));
    }
    if vector.len() != table.dim() {
        return Err(Error::shape("insert_category", (1, table.dim()), (1, vector.len())));
    }
    knn::validate(n + 1, k, alpha)?;

    let mut index = table.index.clone();
    let node = index.push_unseen(name.to_string(), name.to_string())?;

    let neighbors: Vec<usize> = nearest(&table.vectors, vector, k, None)
        .into_iter()
        .filter(|&(_, d)| d <= alpha)
        .map(|(j, _)| j)
        .collect();
    if neighbors.is_empty() {
        log::warn!("class `{name}` has no neighbour within alpha={alpha}; added with a self-loop only");
    }

    let a = SparseAdjacency::from_pattern(
        n + 1,
        bundle.a.pattern().into_iter().chain([(node, node)]),
    )?;
    let b = SparseAdjacency::from_pattern(
        n + 1,
        bundle
            .b
            .pattern()
            .into_iter()
            .chain(neighbors.iter().flat_map(|&j| [(node, j), (j, node)])),
    )?;
    let mut rows: Vec<&[f64]> = (0..n).map(|i| table.vectors.row(i)).collect();
    rows.push(vector);
    let table = EmbeddingTable::new(index, DenseMatrix::from_rows(&rows)?)?;
    let bundle = GraphBundle::assemble(
        a,
        b,
        bundle.k,
        bundle.alpha,
        bundle.norm_mode,
        bundle.merge_rule,
    )?;
    Ok(Insertion {
        bundle,
        table,
        node,
        neighbors,
    })
}
