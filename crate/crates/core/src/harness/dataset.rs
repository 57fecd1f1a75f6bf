use crate::error::{Error, Result};
use crate::graph::{ClassIndex, EmbeddingTable};
use crate::net::OUTPUT_NORM_EPS;
use crate::tensor::{row_l2_normalize, DenseMatrix};

/// Labelled test features. Row `i` of `features` belongs to class `labels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub ids: Vec<String>,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
}

impl EvalSet {
    pub fn new(ids: Vec<String>, features: DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        if ids.len() != features.rows() || labels.len() != features.rows() {
            return Err(Error::Config(format!(
                "eval set has {} ids, {} labels and {} feature rows",
                ids.len(),
                labels.len(),
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("eval features".into()));
        }
        Ok(Self { ids, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Everything needed to train and score one zero-shot task.
#[derive(Debug, Clone, PartialEq)]
pub struct ZslDataset {
    pub embeddings: EmbeddingTable,
    /// One L2-normalized row per seen class, in index order.
    pub gt_classifiers: DenseMatrix,
    pub eval: EvalSet,
}

impl ZslDataset {
    /// Normalizes `gt_classifiers` rows and checks that every label exists.
    pub fn new(embeddings: EmbeddingTable, gt_classifiers: DenseMatrix, eval: EvalSet) -> Result<Self> {
        let index = &embeddings.index;
        if gt_classifiers.rows() != index.seen_count() {
            return Err(Error::Config(format!(
                "{} ground-truth classifiers for {} seen classes",
                gt_classifiers.rows(),
                index.seen_count()
            )));
        }
        if !gt_classifiers.is_finite() {
            return Err(Error::NonFinite("ground-truth classifiers".into()));
        }
        if eval.features.rows() > 0 && eval.features.cols() != gt_classifiers.cols() {
            return Err(Error::Config(format!(
                "eval features have dimension {}, classifiers {}",
                eval.features.cols(),
                gt_classifiers.cols()
            )));
        }
        if let Some(&bad) = eval.labels.iter().find(|&&l| l >= index.len()) {
            return Err(Error::Config(format!("eval label {bad} is out of range")));
        }
        Ok(Self {
            gt_classifiers: row_l2_normalize(&gt_classifiers, OUTPUT_NORM_EPS),
            embeddings,
            eval,
        })
    }

    pub fn index(&self) -> &ClassIndex {
        &self.embeddings.index
    }

    /// Classifier dimension `D`.
    pub fn classifier_dim(&self) -> usize {
        self.gt_classifiers.cols()
    }

    /// Full `N × D` regression target: ground truth on seen rows, zero elsewhere.
    pub fn targets(&self) -> DenseMatrix {
        let n = self.index().len();
        let mut t = DenseMatrix::zeros(n, self.classifier_dim());
        for r in 0..self.gt_classifiers.rows() {
            t.row_mut(r).copy_from_slice(self.gt_classifiers.row(r));
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        let pair = |s: &str| (s.to_string(), s.to_string());
        let index = ClassIndex::new(vec![pair("a"), pair("b")], vec![pair("c")]).unwrap();
        EmbeddingTable::new(index, DenseMatrix::identity(3)).unwrap()
    }

    #[test]
    fn ground_truth_is_normalized_and_targets_padded() {
        let gt = DenseMatrix::from_rows(&[[3.0, 4.0], [0.0, 2.0]]).unwrap();
        let eval = EvalSet::new(vec!["s".into()], DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap(), vec![2]).unwrap();
        let ds = ZslDataset::new(table(), gt, eval).unwrap();
        assert_eq!(ds.gt_classifiers.row(0), &[0.6, 0.8]);
        assert_eq!(ds.targets().data(), &[0.6, 0.8, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let gt = DenseMatrix::identity(2);
        let eval = |label| EvalSet::new(vec!["s".into()], DenseMatrix::zeros(1, 2), vec![label]).unwrap();
        assert!(ZslDataset::new(table(), gt.clone(), eval(3)).is_err());
        assert!(ZslDataset::new(table(), DenseMatrix::identity(3), eval(2)).is_err());
        assert!(EvalSet::new(vec![], DenseMatrix::zeros(1, 2), vec![0]).is_err());
    }
}
