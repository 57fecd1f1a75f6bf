//! Benchmark inputs shared by the criterion targets in `benches/`.

use zslkit::graph::{normalize_adjacency, NormMode};
use zslkit::{DenseMatrix, Rng, SparseAdjacency};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Random-walk normalized graph with self-loops and about `degree`
/// neighbours per node.
pub fn random_graph(n: usize, degree: usize, seed: u64) -> SparseAdjacency {
    let mut rng = Rng::new(seed);
    let mut coords: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for i in 0..n {
        for _ in 0..degree.div_ceil(2) {
            let j = rng.below(n);
            if j != i {
                coords.push((i, j));
                coords.push((j, i));
            }
        }
    }
    let c = SparseAdjacency::from_pattern(n, coords).expect("valid pattern");
    normalize_adjacency(&c, NormMode::RandomWalk).expect("normalizable")
}
