//! Semantic-enhanced knowledge graph construction.
//!
//! `A` is the taxonomy with self-loops, `B` the thresholded k-NN graph over
//! class word embeddings, `C` their merge and `Â` the normalized `C` fed to
//! the network.

mod bundle;
mod index;
pub mod knn;
mod taxonomy;

pub use bundle::{
    insert_category, merge_graphs, merge_graphs_with, normalize_adjacency, GraphBundle, Insertion,
    MergeRule, NormMode,
};
pub use index::{
    embed_class_name, tokenize_class_name, ClassEmbedding, ClassIndex, EmbeddingTable,
    WordVectors, DEFAULT_EMBEDDING_DIM,
};
pub use knn::knn_graph;
pub use taxonomy::{load_taxonomy, TaxonomyEdge};
