use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(6) {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", &self.row(r)[..self.cols.min(6)])?;
        }
        if self.rows > 6 {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("from_vec", (rows, cols), (data.len(), 1)));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape("from_rows", (i, r.len()), (0, cols)));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        const TILE: usize = 32;
        let mut out = Self::zeros(self.cols, self.rows);
        for r0 in (0..self.rows).step_by(TILE) {
            for c0 in (0..self.cols).step_by(TILE) {
                for r in r0..(r0 + TILE).min(self.rows) {
                    for c in c0..(c0 + TILE).min(self.cols) {
                        out.data[c * self.rows + r] = self.data[r * self.cols + c];
                    }
                }
            }
        }
        out
    }

    /// `self · rhs`. Each output element accumulates its products in ascending
    /// inner-index order, starting from zero.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        kernel::gemm(&self.data, self.cols, 1, &rhs.data, &mut out.data, self.rows, self.cols, rhs.cols);
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape("t_matmul", self.shape(), rhs.shape()));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        kernel::gemm(&self.data, 1, self.cols, &rhs.data, &mut out.data, self.cols, self.rows, rhs.cols);
        Ok(out)
    }

    /// `self · rhsᵀ`. Only the smaller operand is transposed; both routes
    /// multiply the same pairs in the same order.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape("matmul_t", self.shape(), rhs.shape()));
        }
        if rhs.rows > self.rows {
            Ok(rhs.matmul(&self.transpose())?.transpose())
        } else {
            self.matmul(&rhs.transpose())
        }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.add_assign(rhs)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, rhs: &DenseMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("add", self.shape(), rhs.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("sub", self.shape(), rhs.shape()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("hadamard", self.shape(), rhs.shape()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

mod kernel {
    /// Rows and columns of the register tile.
    const MR: usize = 4;
    const NR: usize = 8;

    /// `c[m×n] += A · b[k×n]` where `A(i, p) = a[i * rs + p * cs]`, so the
    /// same kernel serves `a` and `aᵀ`. For a fixed output element the
    /// products are added in ascending `p` order onto the initial `c` value,
    /// so the result does not depend on tiling or vector width. No fused
    /// multiply-add is used.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn gemm(a: &[f64], rs: usize, cs: usize, b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") {
                // SAFETY: guarded by the runtime feature check above.
                unsafe { gemm_avx2(a, rs, cs, b, c, m, k, n) };
                return;
            }
        }
        gemm_generic(a, rs, cs, b, c, m, k, n);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_avx2(a: &[f64], rs: usize, cs: usize, b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        gemm_with(a, rs, cs, b, c, m, k, n, |a, rs, cs, strip, c, i, j, k, n| {
            // SAFETY: avx2 is enabled for this function.
            unsafe { tile_avx2(a, rs, cs, strip, c, i, j, k, n) }
        });
    }

    /// [`tile`] with explicit 256-bit vectors: separate multiply and add,
    /// exactly as the scalar version rounds.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile_avx2(a: &[f64], rs: usize, cs: usize, strip: &[f64], c: &mut [f64], i: usize, j: usize, k: usize, n: usize) {
        use std::arch::x86_64::*;
        assert!(strip.len() >= k * NR);
        assert!((i + MR - 1) * n + j + NR <= c.len());
        assert!(k == 0 || (i + MR - 1) * rs + (k - 1) * cs < a.len());
        let cp = c.as_mut_ptr();
        let ap = a.as_ptr();
        let sp = strip.as_ptr();
        let mut acc = [[_mm256_setzero_pd(); 2]; MR];
        for (r, row) in acc.iter_mut().enumerate() {
            let base = cp.add((i + r) * n + j);
            row[0] = _mm256_loadu_pd(base);
            row[1] = _mm256_loadu_pd(base.add(4));
        }
        for p in 0..k {
            let b0 = _mm256_loadu_pd(sp.add(p * NR));
            let b1 = _mm256_loadu_pd(sp.add(p * NR + 4));
            for (r, row) in acc.iter_mut().enumerate() {
                let av = _mm256_set1_pd(*ap.add((i + r) * rs + p * cs));
                row[0] = _mm256_add_pd(row[0], _mm256_mul_pd(av, b0));
                row[1] = _mm256_add_pd(row[1], _mm256_mul_pd(av, b1));
            }
        }
        for (r, row) in acc.iter().enumerate() {
            let base = cp.add((i + r) * n + j);
            _mm256_storeu_pd(base, row[0]);
            _mm256_storeu_pd(base.add(4), row[1]);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn gemm_generic(a: &[f64], rs: usize, cs: usize, b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
        gemm_with(a, rs, cs, b, c, m, k, n, tile);
    }

    type TileFn = fn(&[f64], usize, usize, &[f64], &mut [f64], usize, usize, usize, usize);

    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn gemm_with(a: &[f64], rs: usize, cs: usize, b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, tile: TileFn) {
        let full_cols = n - n % NR;
        let full_rows = m - m % MR;
        let mut packed = vec![0.0; k * NR];
        for j in (0..full_cols).step_by(NR) {
            for (p, dst) in packed.chunks_exact_mut(NR).enumerate() {
                dst.copy_from_slice(&b[p * n + j..p * n + j + NR]);
            }
            for i in (0..full_rows).step_by(MR) {
                tile(a, rs, cs, &packed, c, i, j, k, n);
            }
            for i in full_rows..m {
                edge(a, rs, cs, b, c, i, j, j + NR, k, n);
            }
        }
        if full_cols < n {
            for i in 0..m {
                edge(a, rs, cs, b, c, i, full_cols, n, k, n);
            }
        }
    }

    /// Full `MR × NR` tile with the accumulators held in registers. `strip`
    /// holds columns `j..j + NR` of `b`, packed row by row.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn tile(a: &[f64], rs: usize, cs: usize, strip: &[f64], c: &mut [f64], i: usize, j: usize, k: usize, n: usize) {
        let mut acc = [[0.0f64; NR]; MR];
        for (r, row) in acc.iter_mut().enumerate() {
            row.copy_from_slice(&c[(i + r) * n + j..(i + r) * n + j + NR]);
        }
        for (p, bp) in strip.chunks_exact(NR).enumerate().take(k) {
            for (r, row) in acc.iter_mut().enumerate() {
                let av = a[(i + r) * rs + p * cs];
                for q in 0..NR {
                    row[q] += av * bp[q];
                }
            }
        }
        for (r, row) in acc.iter().enumerate() {
            c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
        }
    }

    /// One output row over columns `j0..j1`.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn edge(a: &[f64], rs: usize, cs: usize, b: &[f64], c: &mut [f64], i: usize, j0: usize, j1: usize, k: usize, n: usize) {
        let crow = &mut c[i * n + j0..i * n + j1];
        for p in 0..k {
            let av = a[i * rs + p * cs];
            for (cv, bv) in crow.iter_mut().zip(&b[p * n + j0..p * n + j1]) {
                *cv += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = 0.0;
            for p in 0..a.cols() {
                s += a.get(i, p) * b.get(p, j);
            }
            s
        })
    }

    #[test]
    fn identity_times_m_is_m() {
        let m = DenseMatrix::from_rows(&[[1.5, -2.0], [0.25, 7.0]]).unwrap();
        assert_eq!(DenseMatrix::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_computed_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, DenseMatrix::from_rows(&[[2.0], [4.0]]).unwrap());
    }

    #[test]
    fn zeros_annihilate() {
        let z = DenseMatrix::zeros(3, 2);
        let b = DenseMatrix::from_fn(2, 5, |i, j| (i * 5 + j) as f64 - 3.3);
        assert_eq!(z.matmul(&b).unwrap(), DenseMatrix::zeros(3, 5));
    }

    #[test]
    fn shape_error_names_both_operands() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                op: "matmul",
                lhs: (2, 3),
                rhs: (2, 3)
            }
        ));
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn blocked_kernel_matches_naive_bitwise() {
        // Odd sizes exercise the 4-row blocks and the remainder rows.
        let a = DenseMatrix::from_fn(7, 13, |i, j| ((i * 31 + j * 17) % 11) as f64 * 0.37 - 1.9);
        let b = DenseMatrix::from_fn(13, 9, |i, j| ((i * 7 + j * 5) % 13) as f64 * -0.21 + 1.1);
        assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b));
        // Wider than one column tile.
        let a = DenseMatrix::from_fn(6, 21, |i, j| ((i * 13 + j * 3) % 17) as f64 * 0.11 - 0.8);
        let b = DenseMatrix::from_fn(21, 150, |i, j| ((i * 5 + j * 11) % 19) as f64 * 0.07 - 0.6);
        assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b));
        let g = DenseMatrix::from_fn(6, 150, |i, j| ((i + j) % 7) as f64 - 3.1);
        assert_eq!(a.t_matmul(&g).unwrap(), naive(&a.transpose(), &g));
        assert_eq!(g.matmul_t(&b).unwrap(), naive(&g, &b.transpose()));
        let tall = DenseMatrix::from_fn(40, 21, |i, j| ((i * 3 + j) % 5) as f64 * 0.3 - 0.7);
        assert_eq!(a.matmul_t(&tall).unwrap(), naive(&a, &tall.transpose()));
        assert_eq!(b.transpose().transpose(), b);
    }

    #[test]
    fn transposed_products() {
        let a = DenseMatrix::from_fn(5, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let b = DenseMatrix::from_fn(5, 4, |i, j| (i * j) as f64 * 0.1 + 1.0);
        assert_eq!(a.t_matmul(&b).unwrap(), naive(&a.transpose(), &b));
        let c = DenseMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64);
        assert_eq!(a.matmul_t(&c).unwrap(), naive(&a, &c.transpose()));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0]).is_err());
    }
}
