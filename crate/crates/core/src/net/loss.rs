use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Mean squared error over the rows flagged in `seen_mask`.
///
/// `loss = Σ_{j seen} ‖f_j − f̂_j‖² / (M·D)` where `M` is the number of seen
/// rows and `D` the row width. The gradient is zero on unseen rows.
pub fn mse_loss_masked(
    pred: &DenseMatrix,
    target: &DenseMatrix,
    seen_mask: &[bool],
) -> Result<(f64, DenseMatrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss_masked", pred.shape(), target.shape()));
    }
    if seen_mask.len() != pred.rows() {
        return Err(Error::shape("mse_loss_masked (mask)", pred.shape(), (seen_mask.len(), 1)));
    }
    let m = seen_mask.iter().filter(|&&s| s).count();
    if m == 0 {
        return Err(Error::Empty("loss mask selects no rows"));
    }
    let denom = (m * pred.cols()) as f64;
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    let mut sum = 0.0;
    for r in (0..pred.rows()).filter(|&r| seen_mask[r]) {
        let g = grad.row_mut(r);
        for ((gv, &p), &t) in g.iter_mut().zip(pred.row(r)).zip(target.row(r)) {
            let d = p - t;
            sum += d * d;
            *gv = 2.0 * d / denom;
        }
    }
    Ok((sum / denom, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let f = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let (l, g) = mse_loss_masked(&f, &f, &[true, true, false]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn hand_case() {
        let pred = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let gt = DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let (l, g) = mse_loss_masked(&pred, &gt, &[true]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.row(0), &[1.0, -1.0]);
    }

    #[test]
    fn unseen_rows_do_not_matter() {
        let gt = DenseMatrix::from_fn(3, 2, |i, j| (i * j) as f64);
        let mut pred = gt.map(|v| v + 0.1);
        let (l1, _) = mse_loss_masked(&pred, &gt, &[true, false, true]).unwrap();
        pred.set(1, 0, 1e6);
        pred.set(1, 1, -42.0);
        let (l2, g) = mse_loss_masked(&pred, &gt, &[true, false, true]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let f = DenseMatrix::zeros(2, 2);
        assert!(mse_loss_masked(&f, &f, &[false, false]).is_err());
    }
}
