use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, SparseAdjacency};

/// Euclidean distance, accumulated in ascending coordinate order.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Orders candidates by distance, then by ascending node index.
fn by_distance_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// The `k` rows of `points` closest to `query`, nearest first, skipping row
/// `exclude`. Ties go to the smaller index.
pub fn nearest(
    points: &DenseMatrix,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = (0..points.rows())
        .filter(|&j| Some(j) != exclude)
        .map(|j| (j, euclidean(query, points.row(j))))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    cand
}

/// Thresholded k-nearest-neighbour graph over the rows of `points`.
///
/// Each node proposes its `k` nearest other nodes; proposals farther than
/// `alpha` are dropped (a distance equal to `alpha` is kept). The surviving
/// proposals become undirected edges, so the result is the symmetric union
/// with an empty diagonal.
pub fn knn_graph(points: &DenseMatrix, k: usize, alpha: f64) -> Result<SparseAdjacency> {
    let n = points.rows();
    validate(n, k, alpha)?;
    let mut coords = Vec::with_capacity(2 * n * k);
    for i in 0..n {
        for (j, d) in nearest(points, points.row(i), k, Some(i)) {
            if d <= alpha {
                coords.push((i, j));
                coords.push((j, i));
            }
        }
    }
    SparseAdjacency::from_pattern(n, coords)
}

pub(crate) fn validate(n: usize, k: usize, alpha: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("k-NN graph needs at least 2 nodes, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k must be in 1..{n}, got {k}")));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute force: full distance matrix, full sort of every row.
    use super::*;

    pub fn knn_pattern(points: &DenseMatrix, k: usize, alpha: f64) -> Vec<(usize, usize)> {
        let n = points.rows();
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| euclidean(points.row(i), points.row(j))).collect())
            .collect();
        let mut edges = std::collections::BTreeSet::new();
        for (i, row) in dist.iter().enumerate() {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            for &j in order.iter().take(k) {
                if row[j] <= alpha {
                    edges.insert((i, j));
                    edges.insert((j, i));
                }
            }
        }
        edges.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> DenseMatrix {
        DenseMatrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn one_dimensional_example() {
        let b = knn_graph(&line(&[0.0, 1.0, 3.0]), 1, 2.0).unwrap();
        assert_eq!(b.pattern(), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert!(b.is_symmetric(0.0));
    }

    #[test]
    fn threshold_prunes() {
        let b = knn_graph(&line(&[0.0, 1.0, 3.0]), 1, 1.5).unwrap();
        assert_eq!(b.pattern(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn distance_equal_to_alpha_is_kept() {
        let b = knn_graph(&line(&[0.0, 2.0]), 1, 2.0).unwrap();
        assert_eq!(b.undirected_edge_count(), 1);
    }

    #[test]
    fn identical_points_tie_break_by_index() {
        let p = DenseMatrix::from_vec(5, 2, vec![0.3; 10]).unwrap();
        // k = n-1: every node selects every other node.
        let full = knn_graph(&p, 4, 0.1).unwrap();
        assert_eq!(full.undirected_edge_count(), 10);
        assert!((0..5).all(|i| !full.contains(i, i)));
        // k = 1: node 0 picks node 1, everyone else picks node 0 (a star).
        let star = knn_graph(&p, 1, 0.1).unwrap();
        let mut want: Vec<(usize, usize)> = (1..5).flat_map(|j| [(0, j), (j, 0)]).collect();
        want.sort();
        assert_eq!(star.pattern(), want);
    }

    #[test]
    fn config_errors() {
        let p = line(&[0.0, 1.0, 2.0]);
        assert!(knn_graph(&p, 3, 1.0).is_err());
        assert!(knn_graph(&p, 0, 1.0).is_err());
        assert!(knn_graph(&p, 1, 0.0).is_err());
        assert!(knn_graph(&line(&[0.0]), 1, 1.0).is_err());
    }

    fn random_points(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = Rng::new(seed);
        // Coarse grid values make exact distance ties common.
        DenseMatrix::from_fn(n, d, |_, _| (rng.below(5) as f64) * 0.25)
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 2usize..30, d in 1usize..6, k in 1usize..6, alpha in 0.1f64..2.0, seed in any::<u64>()) {
            let k = k.min(n - 1);
            let p = random_points(n, d, seed);
            let b = knn_graph(&p, k, alpha).unwrap();
            prop_assert_eq!(b.pattern(), oracle::knn_pattern(&p, k, alpha));
            prop_assert!(b.is_symmetric(0.0));
        }

        #[test]
        fn monotone_in_k_and_alpha(n in 3usize..25, seed in any::<u64>(), a1 in 0.1f64..1.0, extra in 0.0f64..1.0) {
            let p = random_points(n, 3, seed);
            let small = knn_graph(&p, 1, a1).unwrap();
            let wider = knn_graph(&p, 1, a1 + extra).unwrap();
            let deeper = knn_graph(&p, 2.min(n - 1), a1).unwrap();
            for (r, c) in small.pattern() {
                prop_assert!(wider.contains(r, c));
                prop_assert!(deeper.contains(r, c));
            }
        }
    }
}
