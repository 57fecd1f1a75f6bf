use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Square CSR matrix over `n` graph nodes.
///
/// Always canonical: column indices strictly increase within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdjacency {
    /// Validates raw CSR arrays.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return Err(Error::Invariant(format!(
                "row_ptr must have length {} and start at 0",
                n + 1
            )));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Invariant("row_ptr, col_idx and values disagree".into()));
        }
        for r in 0..n {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::Invariant(format!("row_ptr decreases at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.iter().any(|&c| c >= n) {
                return Err(Error::Invariant(format!("column out of range in row {r}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invariant(format!(
                    "columns not strictly increasing in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse values".into()));
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a canonical matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= n || t.1 >= n) {
            return Err(Error::shape("from_triplets", (n, n), (r, c)));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_csr(n, row_ptr, col_idx, values)
    }

    /// Binary matrix with a 1.0 at every listed coordinate; duplicates collapse.
    pub fn from_pattern(n: usize, coords: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut coords: Vec<(usize, usize)> = coords.into_iter().collect();
        coords.sort_unstable();
        coords.dedup();
        Self::from_triplets(n, coords.into_iter().map(|(r, c)| (r, c, 1.0)).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span].binary_search(&c).is_ok()
    }

    /// All stored coordinates in row-major order.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.triplets().map(|(r, c, _)| (r, c)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Count of off-diagonal stored entries with `r < c`, i.e. undirected
    /// edges for a symmetric pattern.
    pub fn undirected_edge_count(&self) -> usize {
        self.triplets().filter(|&(r, c, _)| r < c).count()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets()
            .all(|(r, c, v)| self.contains(c, r) && (self.get(c, r) - v).abs() <= tol)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            out.set(r, c, v);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        Self::from_triplets(self.n, t).expect("transpose of a valid matrix is valid")
    }

    /// `self · x`. Row `i` reads only the stored neighbours of `i`, in
    /// ascending column order.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n != x.rows() {
            return Err(Error::shape("spmm", (self.n, self.n), x.shape()));
        }
        let d = x.cols();
        let mut out = DenseMatrix::zeros(self.n, d);
        for r in 0..self.n {
            let orow = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, xv) in orow.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`, computed by scattering along stored entries.
    pub fn spmm_t(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n != x.rows() {
            return Err(Error::shape("spmm_t", (self.n, self.n), x.shape()));
        }
        let d = x.cols();
        let mut out = DenseMatrix::zeros(self.n, d);
        for r in 0..self.n {
            let xrow = x.row(r);
            for (c, v) in self.row(r) {
                for (o, xv) in out.row_mut(c).iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// Copy with every stored value replaced by `f(row, col, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[p] = f(r, self.col_idx[p], self.values[p]);
            }
        }
        out
    }
}
