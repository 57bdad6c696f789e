//! Unrestarted right-preconditioned GMRES with modified Gram-Schmidt and
//! Givens rotations.

use crate::assembly::SparseOperator;
use crate::error::{Error, Result};

use super::Preconditioner;

pub(crate) enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Ilu0(Ilu0),
}

impl Precond {
    pub(crate) fn build(k: &SparseOperator, kind: Preconditioner) -> Result<Self> {
        Ok(match kind {
            Preconditioner::None => Precond::Identity,
            Preconditioner::Jacobi => {
                let d = k.diagonal();
                if let Some(i) = d.iter().position(|&x| x == 0.0) {
                    return Err(Error::Singular(format!("zero diagonal in row {i}")));
                }
                Precond::Jacobi(d.iter().map(|x| 1.0 / x).collect())
            }
            Preconditioner::Ilu0 => Precond::Ilu0(Ilu0::new(k)?),
        })
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Precond::Identity => y.copy_from_slice(x),
            Precond::Jacobi(inv) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(inv) {
                    *yi = xi * di;
                }
            }
            Precond::Ilu0(f) => f.solve(x, y),
        }
    }
}

/// Incomplete LU on the pattern of the matrix; `L` has a unit diagonal.
pub(crate) struct Ilu0 {
    lu: SparseOperator,
}

impl Ilu0 {
    fn new(k: &SparseOperator) -> Result<Self> {
        let mut lu = k.clone();
        let p = lu.pattern().clone();
        let n = p.n();
        for i in 0..n {
            let row = p.row(i).to_vec();
            let base = p.row_range(i).start;
            for (a, &kcol) in row.iter().enumerate() {
                if kcol >= i {
                    break;
                }
                let pivot = lu.values()[p.diag_slot(kcol)];
                if pivot == 0.0 {
                    return Err(Error::Singular(format!("zero pivot in ILU(0) at row {kcol}")));
                }
                let lik = lu.values()[base + a] / pivot;
                lu.values_mut()[base + a] = lik;
                for kk in p.row_range(kcol) {
                    let j = p.row(kcol)[kk - p.row_range(kcol).start];
                    if j <= kcol {
                        continue;
                    }
                    if let Some(slot) = p.slot(i, j) {
                        let ukj = lu.values()[kk];
                        lu.values_mut()[slot] -= lik * ukj;
                    }
                }
            }
            if lu.values()[p.diag_slot(i)] == 0.0 {
                return Err(Error::Singular(format!("zero pivot in ILU(0) at row {i}")));
            }
        }
        Ok(Ilu0 { lu })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let p = self.lu.pattern();
        let v = self.lu.values();
        let n = p.n();
        for i in 0..n {
            let mut s = b[i];
            let r = p.row_range(i);
            for (k, &j) in r.clone().zip(p.row(i)) {
                if j >= i {
                    break;
                }
                s -= v[k] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for (k, &j) in p.row_range(i).zip(p.row(i)) {
                if j > i {
                    s -= v[k] * x[j];
                }
            }
            x[i] = s / v[p.diag_slot(i)];
        }
    }
}

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Least-squares residual norm after each iteration, starting with `|b|`.
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `K x = b` from the zero initial guess.
pub(crate) fn gmres(k: &SparseOperator, m: &Precond, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<GmresOutcome> {
    let n = b.len();
    let beta = norm(b);
    if beta == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            converged: true,
            residuals: vec![0.0],
        });
    }
    let target = rel_tol * beta;
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut residuals = vec![beta];
    let mut tmp = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let j = iterations;
        m.apply(&basis[j], &mut tmp);
        k.matvec(&tmp, &mut w);
        let mut col = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            col[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let hnext = norm(&w);
        col[j + 1] = hnext;
        for i in 0..j {
            let (a, b2) = (col[i], col[i + 1]);
            col[i] = cs[i] * a + sn[i] * b2;
            col[i + 1] = -sn[i] * a + cs[i] * b2;
        }
        let r = col[j].hypot(col[j + 1]);
        if r == 0.0 {
            return Err(Error::Breakdown(j + 1));
        }
        cs.push(col[j] / r);
        sn.push(col[j + 1] / r);
        col[j] = r;
        col[j + 1] = 0.0;
        let gj = g[j];
        g[j] = cs[j] * gj;
        g.push(-sn[j] * gj);
        h.push(col);
        iterations += 1;
        let res = g[j + 1].abs();
        residuals.push(res);
        if res <= target {
            converged = true;
            break;
        }
        if hnext <= f64::EPSILON * beta {
            // invariant subspace reached without meeting the tolerance
            return Err(Error::Breakdown(iterations));
        }
        basis.push(w.iter().map(|x| x / hnext).collect());
    }
    // back substitution for the upper-triangular least-squares system
    let mm = iterations;
    let mut y = vec![0.0; mm];
    for i in (0..mm).rev() {
        let mut s = g[i];
        for c in i + 1..mm {
            s -= h[c][i] * y[c];
        }
        y[i] = s / h[i][i];
    }
    let mut z = vec![0.0; n];
    for (yi, v) in y.iter().zip(&basis) {
        for (zk, vk) in z.iter_mut().zip(v) {
            *zk += yi * vk;
        }
    }
    let mut x = vec![0.0; n];
    m.apply(&z, &mut x);
    Ok(GmresOutcome {
        x,
        iterations,
        converged,
        residuals,
    })
}
