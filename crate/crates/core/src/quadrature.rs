//! Collapsed-coordinate Gauss-Jacobi rules on the reference simplex
//! `{xi_i >= 0, sum xi_i <= 1}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use faer::{Mat, Side};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 8;

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    dim: usize,
    order: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Polynomial degree integrated exactly.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(&p[..self.dim]))
            .sum()
    }
}

/// Gauss-Jacobi nodes and weights on `[0, 1]` for the weight `(1 - a)^alpha`,
/// from the eigen-decomposition of the Jacobi matrix (Golub-Welsch).
fn gauss_jacobi(m: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    let ab = alpha + beta;
    let diag: Vec<f64> = (0..m)
        .map(|n| {
            let n = n as f64;
            if n == 0.0 {
                (beta - alpha) / (ab + 2.0)
            } else {
                (beta * beta - alpha * alpha) / ((2.0 * n + ab) * (2.0 * n + ab + 2.0))
            }
        })
        .collect();
    let off: Vec<f64> = (1..m)
        .map(|n| {
            let n = n as f64;
            let s = 2.0 * n + ab;
            (4.0 * n * (n + alpha) * (n + beta) * (n + ab) / (s * s * (s + 1.0) * (s - 1.0))).sqrt()
        })
        .collect();
    let jm = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            diag[i]
        } else if i == j + 1 {
            off[j]
        } else if j == i + 1 {
            off[i]
        } else {
            0.0
        }
    });
    let eig = jm
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric tridiagonal eigenproblem");
    // integral of (1-x)^alpha over [-1,1]
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let scale = 2f64.powf(-alpha - 1.0);
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for k in 0..m {
        let x = eig.S()[k];
        let v0 = eig.U()[(0, k)];
        nodes.push(0.5 * (1.0 + x));
        weights.push(scale * mu0 * v0 * v0);
    }
    (nodes, weights)
}

fn build(dim: usize, order: usize) -> QuadratureRule {
    let m = order / 2 + 1;
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|j| gauss_jacobi(m, (dim - 1 - j) as f64)).collect();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let total = m.pow(dim as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        let mut collapsed = [0.0; 3];
        for (j, (nodes, ws)) in axes.iter().enumerate() {
            let k = rem % m;
            rem /= m;
            collapsed[j] = nodes[k];
            w *= ws[k];
        }
        // xi_j = c_j * prod_{i<j} (1 - c_i)
        let mut p = [0.0; 3];
        let mut remaining = 1.0;
        for j in 0..dim {
            p[j] = collapsed[j] * remaining;
            remaining *= 1.0 - collapsed[j];
        }
        points.push(p);
        weights.push(w);
    }
    QuadratureRule {
        dim,
        order,
        points,
        weights,
    }
}

/// Rule on the reference `dim`-simplex exact for polynomials of total degree
/// `order`. Weights are positive and sum to `1/dim!`. Rules are cached.
pub fn quadrature(dim: usize, order: usize) -> Result<Arc<QuadratureRule>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedQuadratureOrder(order));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!("quadrature dimension {dim}")));
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    Ok(guard
        .entry((dim, order))
        .or_insert_with(|| Arc::new(build(dim, order)))
        .clone())
}
