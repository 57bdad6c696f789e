//! Nodal Lagrange shape functions of degree 1 and 2 on the reference simplex.
//!
//! Local numbering: the `dim + 1` vertices first (barycentric coordinate
//! `lambda_0 = 1 - sum xi`, `lambda_i = xi_i`), then for degree 2 the edge
//! midpoints in the order of [`crate::mesh::local_edges`].

use crate::mesh::local_edges;

pub const MAX_LOCAL: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LagrangeBasis {
    pub dim: usize,
    pub degree: usize,
}

impl LagrangeBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        LagrangeBasis { dim, degree }
    }

    pub fn n_local(&self) -> usize {
        let nv = self.dim + 1;
        match self.degree {
            1 => nv,
            2 => nv + nv * (nv - 1) / 2,
            k => unreachable!("degree {k}"),
        }
    }

    fn barycentric(&self, xi: &[f64]) -> ([f64; 4], [[f64; 3]; 4]) {
        let mut lam = [0.0; 4];
        let mut dlam = [[0.0; 3]; 4];
        lam[0] = 1.0 - xi[..self.dim].iter().sum::<f64>();
        for a in 0..self.dim {
            lam[a + 1] = xi[a];
            dlam[0][a] = -1.0;
            dlam[a + 1][a] = 1.0;
        }
        (lam, dlam)
    }

    /// Values and reference gradients at `xi`.
    pub fn eval(&self, xi: &[f64], values: &mut [f64], grads: &mut [[f64; 3]]) {
        let (lam, dlam) = self.barycentric(xi);
        let nv = self.dim + 1;
        match self.degree {
            1 => {
                values[..nv].copy_from_slice(&lam[..nv]);
                grads[..nv].copy_from_slice(&dlam[..nv]);
            }
            2 => {
                for i in 0..nv {
                    values[i] = lam[i] * (2.0 * lam[i] - 1.0);
                    for a in 0..3 {
                        grads[i][a] = (4.0 * lam[i] - 1.0) * dlam[i][a];
                    }
                }
                for (k, (i, j)) in local_edges(nv).enumerate() {
                    values[nv + k] = 4.0 * lam[i] * lam[j];
                    for a in 0..3 {
                        grads[nv + k][a] = 4.0 * (dlam[i][a] * lam[j] + lam[i] * dlam[j][a]);
                    }
                }
            }
            k => unreachable!("degree {k}"),
        }
    }

    /// Reference coordinates of the local nodes.
    pub fn nodes(&self) -> Vec<[f64; 3]> {
        let nv = self.dim + 1;
        let mut vertex = vec![[0.0; 3]; nv];
        for a in 0..self.dim {
            vertex[a + 1][a] = 1.0;
        }
        let mut out = vertex.clone();
        if self.degree == 2 {
            for (i, j) in local_edges(nv) {
                let mut m = [0.0; 3];
                for a in 0..3 {
                    m[a] = 0.5 * (vertex[i][a] + vertex[j][a]);
                }
                out.push(m);
            }
        }
        out
    }
}
