use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Rng};

/// Divides each row by `max(‖row‖₂, eps)`.
pub fn row_l2_normalize(x: &DenseMatrix, eps: f64) -> DenseMatrix {
    debug_assert!(eps > 0.0);
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = norm.max(eps);
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

/// Elementwise `max(x, slope·x)` for `slope ∈ (0, 1)`.
pub fn leaky_relu(x: &DenseMatrix, slope: f64) -> DenseMatrix {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Derivative of [`leaky_relu`]: 1 where `x > 0`, `slope` elsewhere (including `x == 0`).
pub fn leaky_relu_grad(x: &DenseMatrix, slope: f64) -> DenseMatrix {
    x.map(|v| if v > 0.0 { 1.0 } else { slope })
}

/// Inverted-dropout keep mask. `scale` is `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn keep_all(len: usize) -> Self {
        Self {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kept_fraction(&self) -> f64 {
        if self.keep.is_empty() {
            return 1.0;
        }
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }

    /// Applies the mask (and scale) to `x`; used both forward and backward.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.data().len() != self.keep.len() {
            return Err(Error::StaleCache(format!(
                "dropout mask covers {} entries, input has {}",
                self.keep.len(),
                x.data().len()
            )));
        }
        if self.scale == 1.0 && self.keep.iter().all(|&k| k) {
            return Ok(x.clone());
        }
        let mut out = x.clone();
        for (v, &k) in out.data_mut().iter_mut().zip(&self.keep) {
            *v = if k { *v * self.scale } else { 0.0 };
        }
        Ok(out)
    }
}

/// Inverted dropout. In training mode each entry is kept with probability
/// `1 - rate` and scaled by `1 / (1 - rate)`; otherwise `x` passes through.
pub fn dropout(
    x: &DenseMatrix,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(DenseMatrix, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let len = x.data().len();
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::keep_all(len)));
    }
    let keep: Vec<bool> = (0..len).map(|_| rng.uniform() >= rate).collect();
    let mask = DropoutMask {
        keep,
        scale: 1.0 / (1.0 - rate),
    };
    let out = mask.apply(x)?;
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::tensor::Rng;

    #[test]
    fn l2_normalize_hand_case() {
        let x = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let y = row_l2_normalize(&x, 1e-12);
        assert!((y.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((y.get(0, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn l2_normalize_zero_row_stays_zero() {
        let x = DenseMatrix::zeros(2, 3);
        assert_eq!(row_l2_normalize(&x, 1e-12), x);
    }

    #[test]
    fn leaky_relu_values() {
        let x = DenseMatrix::from_rows(&[[2.0, -1.0, 0.0]]).unwrap();
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.row(0), &[2.0, -0.2, 0.0]);
        let g = leaky_relu_grad(&DenseMatrix::from_rows(&[[-3.0, 0.0, 1.0]]).unwrap(), 0.2);
        assert_eq!(g.row(0), &[0.2, 0.2, 1.0]);
    }

    #[test]
    fn leaky_relu_grad_matches_central_differences() {
        let h = 1e-6;
        for &v in &[-3.0, -0.7, -1e-3, 1e-3, 0.4, 5.0] {
            let x = DenseMatrix::from_rows(&[[v]]).unwrap();
            let plus = leaky_relu(&x.map(|t| t + h), 0.2).get(0, 0);
            let minus = leaky_relu(&x.map(|t| t - h), 0.2).get(0, 0);
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - leaky_relu_grad(&x, 0.2).get(0, 0)).abs() < 1e-8, "x={v}");
        }
    }

    #[test]
    fn dropout_rate_zero_and_eval_mode_are_identity() {
        let x = DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        let mut rng = Rng::new(1);
        for training in [true, false] {
            let (y, m) = dropout(&x, 0.0, &mut rng, training).unwrap();
            assert_eq!(y, x);
            assert_eq!(m.kept_fraction(), 1.0);
        }
        let (y, m) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!(y, x);
        assert_eq!(m, DropoutMask::keep_all(9));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let x = DenseMatrix::zeros(1, 1);
        assert!(matches!(
            dropout(&x, 1.0, &mut Rng::new(0), true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_monte_carlo_keep_fraction_and_mean() {
        let x = DenseMatrix::from_vec(1, 100_000, vec![1.0; 100_000]).unwrap();
        let (y, mask) = dropout(&x, 0.5, &mut Rng::new(99), true).unwrap();
        let kept = mask.kept_fraction();
        assert!((kept - 0.5).abs() < 0.01, "kept {kept}");
        let mean = y.data().iter().sum::<f64>() / 100_000.0;
        // Each output is 0 or 2: sd of the mean is 1/sqrt(n) ≈ 0.0032.
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn equal_seeds_equal_masks() {
        let x = DenseMatrix::zeros(10, 10);
        let (_, a) = dropout(&x, 0.3, &mut Rng::new(5), true).unwrap();
        let (_, b) = dropout(&x, 0.3, &mut Rng::new(5), true).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn l2_normalize_unit_rows_and_idempotent(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..6)) {
            let x = DenseMatrix::from_rows(&rows).unwrap();
            let y = row_l2_normalize(&x, 1e-12);
            for r in 0..y.rows() {
                let n: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                let orig: f64 = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                if orig >= 1e-12 {
                    prop_assert!((n - 1.0).abs() < 1e-12);
                }
            }
            let z = row_l2_normalize(&y, 1e-12);
            for (a, b) in z.data().iter().zip(y.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
