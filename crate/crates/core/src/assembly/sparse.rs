//! Compressed-row storage with a structurally symmetric pattern.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
    /// `transpose[k]` is the slot of `(j, i)` when slot `k` holds `(i, j)`.
    transpose: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern from per-row column lists; the lists are symmetrized,
    /// deduplicated, and the diagonal is always included.
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut extra: Vec<(usize, usize)> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            extra.extend(r.iter().filter(|&&j| j != i).map(|&j| (j, i)));
        }
        for (j, i) in extra {
            rows[j].push(i);
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.push(i);
            r.sort_unstable();
            r.dedup();
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in &rows {
            col_idx.extend(r.iter().copied());
            row_ptr.push(col_idx.len());
        }
        let mut pattern = SparsityPattern {
            n,
            row_ptr,
            col_idx,
            diag: vec![0; n],
            transpose: Vec::new(),
        };
        for i in 0..n {
            pattern.diag[i] = pattern.slot(i, i).expect("diagonal present");
        }
        let mut transpose = vec![0; pattern.col_idx.len()];
        for i in 0..n {
            for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                transpose[k] = pattern.slot(pattern.col_idx[k], i).expect("symmetric pattern");
            }
        }
        pattern.transpose = transpose;
        pattern
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }

    pub fn diag_slot(&self, i: usize) -> usize {
        self.diag[i]
    }
}

/// Square sparse matrix on a shared pattern.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        SparseOperator {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("entry ({i}, {j}) in a {n} x {n} matrix")));
            }
            rows[i].push(j);
        }
        let mut op = Self::zeros(Arc::new(SparsityPattern::from_rows(rows)));
        for &(i, j, v) in triplets {
            let k = op.pattern.slot(i, j).expect("slot exists");
            op.values[k] += v;
        }
        Ok(op)
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch("matrix is not square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t).expect("indices in range")
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.pattern.slot(i, j).expect("entry outside the sparsity pattern");
        self.values[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.values[self.pattern.diag[i]]).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for i in 0..p.n {
            let mut s = 0.0;
            for k in p.row_range(i) {
                s += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseOperator {
        let values = self.pattern.transpose.iter().map(|&k| self.values[k]).collect();
        SparseOperator {
            pattern: self.pattern.clone(),
            values,
        }
    }

    /// Replaces rows and columns of the flagged indices by those of the
    /// identity.
    pub fn constrain(&mut self, constrained: &[bool]) {
        let p = self.pattern.clone();
        for i in 0..p.n {
            for k in p.row_range(i) {
                let j = p.col_idx[k];
                if constrained[i] || constrained[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            for k in self.pattern.row_range(i) {
                row[self.pattern.col_idx[k]] = self.values[k];
            }
        }
        a
    }

    /// `(row, col, value)` of all stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.pattern
                .row_range(i)
                .map(move |k| (i, self.pattern.col_idx[k], self.values[k]))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_and_matvec() {
        let a = SparseOperator::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, 3.0, 0.0], vec![4.0, 0.0, 5.0]]).unwrap();
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 9.0]);
        let t = a.transpose();
        assert_eq!(t.to_dense(), vec![vec![1.0, 0.0, 4.0], vec![2.0, 3.0, 0.0], vec![0.0, 0.0, 5.0]]);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn constrain_rows_and_columns() {
        let mut a = SparseOperator::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        a.constrain(&[true, false]);
        assert_eq!(a.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseOperator::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }
}
