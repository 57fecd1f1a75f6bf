use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::ClassIndex;
use crate::harness::{EvalSet, ZslDataset};
use crate::tensor::DenseMatrix;

/// Cut-offs reported by [`evaluate`].
pub const HIT_KS: [usize; 5] = [1, 2, 5, 10, 20];

/// Candidate set used at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Only unseen classes are candidates.
    #[default]
    Conventional,
    /// Seen and unseen classes are candidates.
    Generalized,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Conventional => "conventional",
            Setting::Generalized => "generalized",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Setting::Conventional),
            "generalized" => Ok(Setting::Generalized),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

/// Accuracy per cut-off, serialized as a JSON object keyed by `k` in
/// ascending numeric order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HitAt(pub Vec<(usize, f64)>);

impl HitAt {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.0.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

impl Serialize for HitAt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(&k.to_string(), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for HitAt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = raw
            .into_iter()
            .map(|(k, v)| k.parse::<usize>().map(|k| (k, v)).map_err(serde::de::Error::custom))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        out.sort_by_key(|(k, _)| *k);
        Ok(HitAt(out))
    }
}

/// Hit@1 for each class that has at least one sample, in class order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerClass(pub Vec<(String, f64)>);

impl Serialize for PerClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (id, v) in &self.0 {
            map.serialize_entry(id, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PerClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, f64>::deserialize(d)?;
        Ok(PerClass(raw.into_iter().collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub n_samples: usize,
    /// Fraction of samples whose true class ranks in the top `k`.
    pub hit_at: HitAt,
    /// Hit@k averaged over classes instead of samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mean_hit_at: Option<HitAt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_hit1: Option<PerClass>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn score(f: &DenseMatrix, class: usize, x: &[f64]) -> f64 {
    f.row(class).iter().zip(x).map(|(a, b)| a * b).sum()
}

fn ranks_before(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Inner-product scores `f_jᵀx` over `candidates`, best first. Ties go to
/// the lower class index.
pub fn predict_scores(x: &[f64], f_pred: &DenseMatrix, candidates: &[usize]) -> Result<Vec<(usize, f64)>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if x.len() != f_pred.cols() {
        return Err(Error::shape("predict_scores", (1, x.len()), f_pred.shape()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&c| c >= f_pred.rows()) {
        return Err(Error::Config(format!("candidate class {bad} is out of range")));
    }
    let mut scored: Vec<(usize, f64)> = candidates.iter().map(|&c| (c, score(f_pred, c, x))).collect();
    scored.sort_by(|&a, &b| ranks_before(a, b));
    Ok(scored)
}

/// Zero-based position of `label` in the [`predict_scores`] ranking.
fn rank_of(x: &[f64], f_pred: &DenseMatrix, candidates: &[usize], label: usize) -> usize {
    let own = (label, score(f_pred, label, x));
    candidates
        .iter()
        .filter(|&&c| c != label && ranks_before((c, score(f_pred, c, x)), own) == Ordering::Less)
        .count()
}

/// Hit@k over the dataset's eval samples.
///
/// Conventional evaluation requires every sample to carry an unseen label,
/// since a seen label could never be ranked.
pub fn evaluate(dataset: &ZslDataset, f_pred: &DenseMatrix, setting: Setting) -> Result<EvalReport> {
    evaluate_set(dataset.index(), &dataset.eval, f_pred, setting)
}

/// [`evaluate`] for an eval set that is not bundled with training targets.
pub fn evaluate_set(index: &ClassIndex, eval: &EvalSet, f_pred: &DenseMatrix, setting: Setting) -> Result<EvalReport> {
    if eval.is_empty() {
        return Err(Error::Empty("eval samples"));
    }
    if f_pred.rows() != index.len() {
        return Err(Error::Config(format!(
            "{} predicted classifiers for {} classes",
            f_pred.rows(),
            index.len()
        )));
    }
    if f_pred.cols() != eval.features.cols() {
        return Err(Error::shape("evaluate", f_pred.shape(), eval.features.shape()));
    }
    let candidates: Vec<usize> = match setting {
        Setting::Conventional => index.unseen().collect(),
        Setting::Generalized => (0..index.len()).collect(),
    };
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if setting == Setting::Conventional {
        let seen = eval.labels.iter().filter(|&&l| index.is_seen(l)).count();
        if seen > 0 {
            return Err(Error::Config(format!(
                "{seen} eval samples belong to seen classes; conventional evaluation needs unseen labels only"
            )));
        }
    }

    let mut hits = [0usize; HIT_KS.len()];
    let mut per_class_n = vec![0usize; index.len()];
    let mut per_class_hits = vec![[0usize; HIT_KS.len()]; index.len()];
    for (i, &label) in eval.labels.iter().enumerate() {
        let r = rank_of(eval.features.row(i), f_pred, &candidates, label);
        per_class_n[label] += 1;
        for (slot, &k) in HIT_KS.iter().enumerate() {
            if r < k {
                hits[slot] += 1;
                per_class_hits[label][slot] += 1;
            }
        }
    }

    let n = eval.len() as f64;
    let hit_at = HitAt(HIT_KS.iter().zip(hits).map(|(&k, h)| (k, h as f64 / n)).collect());
    let present: Vec<usize> = (0..index.len()).filter(|&c| per_class_n[c] > 0).collect();
    let class_mean = HitAt(
        HIT_KS
            .iter()
            .enumerate()
            .map(|(slot, &k)| {
                let sum: f64 = present
                    .iter()
                    .map(|&c| per_class_hits[c][slot] as f64 / per_class_n[c] as f64)
                    .sum();
                (k, sum / present.len() as f64)
            })
            .collect(),
    );
    let per_class = PerClass(
        present
            .iter()
            .map(|&c| (index.id(c).to_string(), per_class_hits[c][0] as f64 / per_class_n[c] as f64))
            .collect(),
    );
    Ok(EvalReport {
        setting,
        n_samples: eval.len(),
        hit_at,
        class_mean_hit_at: Some(class_mean),
        per_class_hit1: Some(per_class),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ClassIndex, EmbeddingTable};
    use crate::harness::EvalSet;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn pairs(ids: &[&str]) -> Vec<(String, String)> {
        ids.iter().map(|s| (s.to_string(), s.to_string())).collect()
    }

    /// Two seen, two unseen classes with the given eval samples.
    fn toy(features: DenseMatrix, labels: Vec<usize>) -> ZslDataset {
        let index = ClassIndex::new(pairs(&["s0", "s1"]), pairs(&["u0", "u1"])).unwrap();
        let table = EmbeddingTable::new(index, DenseMatrix::identity(4)).unwrap();
        let ids = (0..labels.len()).map(|i| format!("x{i}")).collect();
        let d = features.cols();
        let gt = DenseMatrix::from_fn(2, d, |i, j| if i == j { 1.0 } else { 0.0 });
        ZslDataset::new(table, gt, EvalSet::new(ids, features, labels).unwrap()).unwrap()
    }

    #[test]
    fn basis_ranking() {
        let f = DenseMatrix::identity(2);
        let r = predict_scores(&[0.9, 0.1], &f, &[0, 1]).unwrap();
        assert_eq!(r, vec![(0, 0.9), (1, 0.1)]);
        assert!(predict_scores(&[0.9, 0.1], &f, &[]).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let f = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let r = predict_scores(&[1.0, 0.0], &f, &[2, 1, 0]).unwrap();
        assert_eq!(r.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn own_direction_ranks_first() {
        let mut rng = Rng::new(2);
        let f = crate::tensor::row_l2_normalize(&DenseMatrix::from_fn(6, 5, |_, _| rng.normal()), 1e-12);
        for j in 0..6 {
            let r = predict_scores(f.row(j), &f, &[0, 1, 2, 3, 4, 5]).unwrap();
            assert_eq!(r[0].0, j);
        }
    }

    #[test]
    fn settings_differ_exactly_when_a_seen_class_wins() {
        // Enumerate every assignment of the four classifier rows to the basis
        // directions of a 2-D space and one feature on the unseen class u0.
        let dirs = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.6, 0.8]];
        let x = [0.8, 0.6];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let f = DenseMatrix::from_rows(&[dirs[a], dirs[b], dirs[c], dirs[d]]).unwrap();
                        let ds = toy(DenseMatrix::from_rows(&[x]).unwrap(), vec![2]);
                        let conv = evaluate(&ds, &f, Setting::Conventional).unwrap();
                        let gen = evaluate(&ds, &f, Setting::Generalized).unwrap();
                        let conv_top = predict_scores(&x, &f, &[2, 3]).unwrap()[0].0;
                        let gen_top = predict_scores(&x, &f, &[0, 1, 2, 3]).unwrap()[0].0;
                        let seen_beats_unseen = gen_top < 2;
                        assert_eq!(conv_top != gen_top, seen_beats_unseen);
                        assert!(conv.hit_at.get(1).unwrap() >= gen.hit_at.get(1).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn perfect_predictions() {
        let f = DenseMatrix::identity(4);
        let feats = DenseMatrix::from_rows(&[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 2.0]]).unwrap();
        let ds = toy(feats, vec![2, 3]);
        let rep = evaluate(&ds, &f, Setting::Conventional).unwrap();
        assert_eq!(rep.hit_at.0, HIT_KS.iter().map(|&k| (k, 1.0)).collect::<Vec<_>>());
        assert_eq!(rep.per_class_hit1.unwrap().0, vec![("u0".into(), 1.0), ("u1".into(), 1.0)]);
    }

    #[test]
    fn conventional_rejects_seen_labels() {
        let ds = toy(DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap(), vec![0]);
        let f = DenseMatrix::from_fn(4, 2, |i, j| if i % 2 == j { 1.0 } else { 0.0 });
        assert!(evaluate(&ds, &f, Setting::Conventional).is_err());
        assert!(evaluate(&ds, &f, Setting::Generalized).is_ok());
    }

    #[test]
    fn random_scores_hit_at_one_near_chance() {
        let mut rng = Rng::new(11);
        let n_classes = 4 + 10;
        let d = 8;
        let pairs_s: Vec<_> = (0..4).map(|i| (format!("s{i}"), format!("s{i}"))).collect();
        let pairs_u: Vec<_> = (0..10).map(|i| (format!("u{i}"), format!("u{i}"))).collect();
        let index = ClassIndex::new(pairs_s, pairs_u).unwrap();
        let table = EmbeddingTable::new(index, DenseMatrix::zeros(n_classes, 1)).unwrap();
        let samples = 4000;
        let feats = DenseMatrix::from_fn(samples, d, |_, _| rng.normal());
        let labels: Vec<usize> = (0..samples).map(|_| 4 + rng.below(10)).collect();
        let ids = (0..samples).map(|i| i.to_string()).collect();
        let gt = DenseMatrix::from_fn(4, d, |_, _| 1.0);
        let ds = ZslDataset::new(table, gt, EvalSet::new(ids, feats, labels).unwrap()).unwrap();
        let f = DenseMatrix::from_fn(n_classes, d, |_, _| rng.normal());
        let rep = evaluate(&ds, &f, Setting::Conventional).unwrap();
        let p = 0.1;
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        assert!((rep.hit_at.get(1).unwrap() - p).abs() < 3.0 * sigma, "{rep:?}");
    }

    #[test]
    fn json_shape() {
        let f = DenseMatrix::identity(4);
        let ds = toy(DenseMatrix::from_rows(&[[0.0, 0.0, 1.0, 0.0]]).unwrap(), vec![2]);
        let rep = evaluate(&ds, &f, Setting::Generalized).unwrap();
        let json = rep.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["setting"], "generalized");
        assert_eq!(v["n_samples"], 1);
        let keys: Vec<&str> = v["hit_at"].as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec!["1", "2", "5", "10", "20"];
        expected.sort();
        assert_eq!(keys, expected);
        let at1 = json.find("\"1\"").unwrap();
        let at10 = json.find("\"10\"").unwrap();
        let at2 = json.find("\"2\"").unwrap();
        assert!(at1 < at2 && at2 < at10, "keys must be emitted in numeric order");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    fn random_case() -> impl Strategy<Value = (u64, usize, usize, usize)> {
        (any::<u64>(), 2usize..6, 2usize..8, 1usize..30)
    }

    proptest! {
        #[test]
        fn report_invariants((seed, n_seen, n_unseen, samples) in random_case()) {
            let mut rng = crate::tensor::Rng::new(seed);
            let d = 4;
            let n = n_seen + n_unseen;
            let ids_s: Vec<_> = (0..n_seen).map(|i| (format!("s{i}"), String::new())).collect();
            let ids_u: Vec<_> = (0..n_unseen).map(|i| (format!("u{i}"), String::new())).collect();
            let index = ClassIndex::new(ids_s, ids_u).unwrap();
            let table = EmbeddingTable::new(index, DenseMatrix::zeros(n, 1)).unwrap();
            let feats = DenseMatrix::from_fn(samples, d, |_, _| rng.normal());
            let labels: Vec<usize> = (0..samples).map(|_| n_seen + rng.below(n_unseen)).collect();
            let ids: Vec<String> = (0..samples).map(|i| i.to_string()).collect();
            let gt = DenseMatrix::from_fn(n_seen, d, |_, _| 1.0);
            let ds = ZslDataset::new(table, gt, EvalSet::new(ids.clone(), feats.clone(), labels.clone()).unwrap()).unwrap();
            // Coarse values make exact ties likely.
            let f = DenseMatrix::from_fn(n, d, |_, _| (rng.below(3) as f64) - 1.0);

            let conv = evaluate(&ds, &f, Setting::Conventional).unwrap();
            let gen = evaluate(&ds, &f, Setting::Generalized).unwrap();
            for rep in [&conv, &gen] {
                let vals: Vec<f64> = rep.hit_at.0.iter().map(|p| p.1).collect();
                prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            }
            for (c, g) in conv.hit_at.0.iter().zip(&gen.hit_at.0) {
                prop_assert!(c.1 >= g.1);
            }

            // Positive rescaling of features leaves every report unchanged.
            let mut scaled = ds.clone();
            scaled.eval.features = feats.scale(3.5);
            prop_assert_eq!(evaluate(&scaled, &f, Setting::Generalized).unwrap(), gen.clone());

            // Rank counting agrees with the explicit ranking.
            let cands: Vec<usize> = (0..n).collect();
            for (i, &l) in labels.iter().enumerate() {
                let ranking = predict_scores(feats.row(i), &f, &cands).unwrap();
                let pos = ranking.iter().position(|p| p.0 == l).unwrap();
                prop_assert_eq!(pos, rank_of(feats.row(i), &f, &cands, l));
            }
        }

        #[test]
        fn unseen_permutation_keeps_hit_rates((seed, n_seen, n_unseen, samples) in random_case()) {
            let mut rng = crate::tensor::Rng::new(seed);
            let d = 3;
            let n = n_seen + n_unseen;
            let feats = DenseMatrix::from_fn(samples, d, |_, _| rng.normal());
            let labels: Vec<usize> = (0..samples).map(|_| n_seen + rng.below(n_unseen)).collect();
            let f = DenseMatrix::from_fn(n, d, |_, _| rng.normal());
            let mut perm: Vec<usize> = (0..n_unseen).collect();
            rng.shuffle(&mut perm);
            // new position of old unseen class u is n_seen + perm[u]
            let relabel = |c: usize| if c < n_seen { c } else { n_seen + perm[c - n_seen] };
            let build = |labels: Vec<usize>, f: &DenseMatrix, order: &dyn Fn(usize) -> usize| {
                let ids_s: Vec<_> = (0..n_seen).map(|i| (format!("s{i}"), String::new())).collect();
                let mut ids_u = vec![(String::new(), String::new()); n_unseen];
                for u in 0..n_unseen {
                    ids_u[order(n_seen + u) - n_seen] = (format!("u{u}"), String::new());
                }
                let index = ClassIndex::new(ids_s, ids_u).unwrap();
                let table = EmbeddingTable::new(index, DenseMatrix::zeros(n, 1)).unwrap();
                let ids: Vec<String> = (0..samples).map(|i| i.to_string()).collect();
                let gt = DenseMatrix::from_fn(n_seen, d, |i, j| f.get(i, j));
                ZslDataset::new(table, gt, EvalSet::new(ids, feats.clone(), labels).unwrap()).unwrap()
            };
            let ident = |c: usize| c;
            let original = build(labels.clone(), &f, &ident);
            let mut f_perm = DenseMatrix::zeros(n, d);
            for c in 0..n {
                f_perm.row_mut(relabel(c)).copy_from_slice(f.row(c));
            }
            let permuted = build(labels.iter().map(|&l| relabel(l)).collect(), &f_perm, &relabel);
            for setting in [Setting::Conventional, Setting::Generalized] {
                let a = evaluate(&original, &f, setting).unwrap();
                let b = evaluate(&permuted, &f_perm, setting).unwrap();
                prop_assert_eq!(a.hit_at, b.hit_at);
            }
        }
    }
}
