//! Sparse LU factorization backed by faer.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::assembly::SparseOperator;
use crate::error::{Error, Result};

pub struct DirectSolver {
    n: usize,
    lu: Lu<usize, f64>,
}

impl DirectSolver {
    pub fn factor(k: &SparseOperator) -> Result<Self> {
        let n = k.n();
        let triplets: Vec<Triplet<usize, usize, f64>> = k
            .triplets()
            .filter(|&(_, _, v)| v != 0.0)
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(DirectSolver { n, lu })
    }

    fn finish(&self, col: Col<f64>) -> Result<Vec<f64>> {
        let x: Vec<f64> = (0..self.n).map(|i| col[i]).collect();
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular("non-finite solution".into()))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut col = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_in_place(col.as_mat_mut());
        self.finish(col)
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut col = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_transpose_in_place(col.as_mat_mut());
        self.finish(col)
    }
}
