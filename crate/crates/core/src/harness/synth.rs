//! Seeded synthetic zero-shot tasks.
//!
//! Class embeddings are drawn around a few cluster centres. Each class's true
//! classifier is `normalize(tanh(M p))` for one fixed random matrix `M`, so
//! classes that are close in embedding space also have close classifiers.
//! The taxonomy is a random tree that prefers parents from the same cluster.

use crate::error::{Error, Result};
use crate::graph::{load_taxonomy, ClassIndex, EmbeddingTable, GraphBundle, NormMode, TaxonomyEdge};
use crate::harness::{EvalSet, ZslDataset};
use crate::net::OUTPUT_NORM_EPS;
use crate::tensor::{row_l2_normalize, streams, DenseMatrix, Rng};

/// Spread of cluster centres (scaled by `1/sqrt(d_w)`).
const CENTER_SCALE: f64 = 0.6;
/// Spread of classes around their centre (scaled by `1/sqrt(d_w)`).
const CLASS_SCALE: f64 = 0.3;
/// Entry scale of the embedding-to-classifier map.
const MAP_GAIN: f64 = 1.5;
/// Probability of picking a same-cluster parent when one is available.
const SAME_CLUSTER_PARENT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub embedding_dim: usize,
    pub classifier_dim: usize,
    /// Per-coordinate standard deviation of the Gaussian noise added to eval features.
    pub noise: f64,
    pub samples_per_class: usize,
    pub k: usize,
    pub alpha: f64,
    pub norm_mode: NormMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seen: 20,
            n_unseen: 10,
            embedding_dim: 16,
            classifier_dim: 32,
            noise: 0.05,
            samples_per_class: 20,
            k: 2,
            alpha: 0.5,
            norm_mode: NormMode::RandomWalk,
        }
    }
}

/// A generated task together with the generator's private ground truth.
#[derive(Debug, Clone)]
pub struct SynthFixture {
    pub dataset: ZslDataset,
    pub bundle: GraphBundle,
    /// True classifiers for every class, seen and unseen.
    pub oracle_classifiers: DenseMatrix,
    pub taxonomy: Vec<TaxonomyEdge>,
    pub clusters: Vec<usize>,
}

/// Default-shaped fixture with the given sizes.
pub fn synth_dataset(
    seed: u64,
    n_seen: usize,
    n_unseen: usize,
    embedding_dim: usize,
    classifier_dim: usize,
    noise: f64,
) -> Result<SynthFixture> {
    synth_with(&SynthConfig {
        seed,
        n_seen,
        n_unseen,
        embedding_dim,
        classifier_dim,
        noise,
        ..SynthConfig::default()
    })
}

pub fn synth_with(cfg: &SynthConfig) -> Result<SynthFixture> {
    if cfg.n_seen < 2 || cfg.n_unseen < 2 {
        return Err(Error::Config("need at least two seen and two unseen classes".into()));
    }
    if cfg.embedding_dim == 0 || cfg.classifier_dim == 0 {
        return Err(Error::Config("embedding and classifier dimensions must be positive".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let n = cfg.n_seen + cfg.n_unseen;
    let d_w = cfg.embedding_dim;
    let mut rng = Rng::with_stream(cfg.seed, streams::SYNTH);

    let n_clusters = n.div_ceil(5).max(2);
    let clusters: Vec<usize> = (0..n).map(|i| i % n_clusters).collect();
    let unit = 1.0 / (d_w as f64).sqrt();
    let centers = DenseMatrix::from_fn(n_clusters, d_w, |_, _| CENTER_SCALE * unit * rng.normal());
    let embeddings =
        DenseMatrix::from_fn(n, d_w, |i, j| centers.get(clusters[i], j) + CLASS_SCALE * unit * rng.normal());

    let map = DenseMatrix::from_fn(d_w, cfg.classifier_dim, |_, _| MAP_GAIN * rng.normal());
    let oracle = row_l2_normalize(&embeddings.matmul(&map)?.map(f64::tanh), OUTPUT_NORM_EPS);

    let ids: Vec<String> = (0..n).map(|i| format!("c{i:03}")).collect();
    let pair = |i: usize| (ids[i].clone(), format!("class{i:03}"));
    let index = ClassIndex::new(
        (0..cfg.n_seen).map(pair).collect(),
        (cfg.n_seen..n).map(pair).collect(),
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut taxonomy = Vec::with_capacity(n - 1);
    for t in 1..n {
        let child = order[t];
        let earlier = &order[..t];
        let same: Vec<usize> = earlier.iter().copied().filter(|&e| clusters[e] == clusters[child]).collect();
        let parent = if !same.is_empty() && rng.uniform() < SAME_CLUSTER_PARENT {
            same[rng.below(same.len())]
        } else {
            earlier[rng.below(earlier.len())]
        };
        taxonomy.push(TaxonomyEdge::new(ids[parent].clone(), ids[child].clone(), t));
    }
    let a = load_taxonomy(&taxonomy, &index)?;

    let d = cfg.classifier_dim;
    let count = cfg.n_unseen * cfg.samples_per_class;
    let mut features = DenseMatrix::zeros(count, d);
    let mut labels = Vec::with_capacity(count);
    for (s, class) in (cfg.n_seen..n).flat_map(|c| std::iter::repeat(c).take(cfg.samples_per_class)).enumerate() {
        for (v, &f) in features.row_mut(s).iter_mut().zip(oracle.row(class)) {
            *v = f + cfg.noise * rng.normal();
        }
        labels.push(class);
    }
    let features = row_l2_normalize(&features, OUTPUT_NORM_EPS);
    let sample_ids = (0..count).map(|i| format!("x{i:05}")).collect();

    let bundle = GraphBundle::build(a, &embeddings, cfg.k, cfg.alpha, cfg.norm_mode)?;
    let gt = oracle.select_rows(&(0..cfg.n_seen).collect::<Vec<_>>());
    let dataset = ZslDataset::new(
        EmbeddingTable::new(index, embeddings)?,
        gt,
        EvalSet::new(sample_ids, features, labels)?,
    )?;
    Ok(SynthFixture {
        dataset,
        bundle,
        oracle_classifiers: oracle,
        taxonomy,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{evaluate, Setting};

    #[test]
    fn noiseless_features_equal_their_classifier() {
        let fx = synth_dataset(4, 20, 10, 16, 32, 0.0).unwrap();
        for (i, &l) in fx.dataset.eval.labels.iter().enumerate() {
            let diff: f64 = fx.dataset.eval.features.row(i).iter().zip(fx.oracle_classifiers.row(l)).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff < 1e-12);
        }
        let rep = evaluate(&fx.dataset, &fx.oracle_classifiers, Setting::Generalized).unwrap();
        assert_eq!(rep.hit_at.get(1), Some(1.0));
    }

    #[test]
    fn same_seed_same_fixture() {
        let a = synth_dataset(9, 5, 4, 6, 8, 0.1).unwrap();
        let b = synth_dataset(9, 5, 4, 6, 8, 0.1).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.bundle, b.bundle);
        assert_eq!(a.oracle_classifiers, b.oracle_classifiers);
        let c = synth_dataset(10, 5, 4, 6, 8, 0.1).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn oracle_hit_at_one_with_moderate_noise() {
        for seed in 0..5 {
            let fx = synth_dataset(seed, 20, 10, 16, 32, 0.1).unwrap();
            let rep = evaluate(&fx.dataset, &fx.oracle_classifiers, Setting::Generalized).unwrap();
            assert!(rep.hit_at.get(1).unwrap() >= 0.95, "seed {seed}: {rep:?}");
        }
    }

    #[test]
    fn structure() {
        let fx = synth_dataset(1, 20, 10, 16, 32, 0.05).unwrap();
        let ds = &fx.dataset;
        assert_eq!(ds.index().seen_count(), 20);
        assert_eq!(ds.gt_classifiers.shape(), (20, 32));
        assert_eq!(fx.taxonomy.len(), 29);
        assert!(ds.eval.labels.iter().all(|&l| !ds.index().is_seen(l)));
        assert_eq!(fx.bundle.a.undirected_edge_count(), 29);
        assert!(fx.bundle.b.nnz() > 0, "k-NN graph should not be empty at default scale");
    }

    #[test]
    fn degenerate_sizes() {
        assert!(synth_dataset(0, 1, 5, 4, 4, 0.0).is_err());
        assert!(synth_dataset(0, 5, 1, 4, 4, 0.0).is_err());
        assert!(synth_dataset(0, 5, 5, 0, 4, 0.0).is_err());
        assert!(synth_dataset(0, 5, 5, 4, 0, 0.0).is_err());
    }
}
