//! Element-wise assembly of the space-time residual, its Jacobian and the
//! source load vector.
//!
//! Elements are processed in parallel blocks; element contributions are
//! scattered sequentially in element order, so results do not depend on the
//! thread count.

pub mod sparse;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{ElementGeometry, ElementValues, FeFunction, FeSpace, LagrangeBasis, Tabulation, MAX_LOCAL};
use crate::mesh::Point;
use crate::problem::ProblemDefinition;
use crate::quadrature::quadrature;

pub use sparse::{SparseOperator, SparsityPattern};

/// `(|g|^2 + eps^2)^((p-2)/2) g`; entries past `g.len()` are zero.
pub fn flux(g: &[f64], p: f64, eps: f64) -> [f64; 2] {
    let s = g.iter().map(|x| x * x).sum::<f64>() + eps * eps;
    let c = s.powf(0.5 * (p - 2.0));
    let mut out = [0.0; 2];
    for (o, &x) in out.iter_mut().zip(g) {
        *o = c * x;
    }
    out
}

/// Derivative of [`flux`] at `g`.
pub fn flux_jacobian(g: &[f64], p: f64, eps: f64) -> [[f64; 2]; 2] {
    let s = g.iter().map(|x| x * x).sum::<f64>() + eps * eps;
    let a = s.powf(0.5 * (p - 2.0));
    let b = (p - 2.0) * s.powf(0.5 * (p - 4.0));
    let mut out = [[0.0; 2]; 2];
    for i in 0..g.len() {
        for j in 0..g.len() {
            out[i][j] = b * g[i] * g[j];
        }
        out[i][i] += a;
    }
    out
}

fn check_problem(space: &FeSpace, prob: &ProblemDefinition) -> Result<()> {
    if space.dim() != prob.d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "space of dimension {} for a problem with d = {}",
            space.dim(),
            prob.d
        )));
    }
    Ok(())
}

pub(crate) fn check_function(space: &Arc<FeSpace>, u: &FeFunction) -> Result<()> {
    if !Arc::ptr_eq(space, u.space()) {
        return Err(Error::DimensionMismatch("function lives on a different space".into()));
    }
    Ok(())
}

impl FeSpace {
    /// Dof coupling pattern, built on first use.
    pub fn sparsity(&self) -> Arc<SparsityPattern> {
        self.pattern
            .get_or_init(|| {
                let mut rows = vec![Vec::new(); self.n_dofs()];
                for e in 0..self.n_elements() {
                    let dofs = self.element_dofs(e);
                    for &i in dofs {
                        rows[i].extend_from_slice(dofs);
                    }
                }
                Arc::new(SparsityPattern::from_rows(rows))
            })
            .clone()
    }
}

type LocalMatrix = [f64; MAX_LOCAL * MAX_LOCAL];

/// `int dt u phi_i + flux(grad_x u).grad_x phi_i`, the source excluded.
fn operator_kernel(ev: &ElementValues, prob: &ProblemDefinition, u: &[f64], out: &mut [f64]) {
    let d = prob.d;
    let n = u.len();
    for q in 0..ev.n_points() {
        let (_, g) = ev.interpolate(q, u);
        let fl = flux(&g[..d], prob.p, prob.eps);
        let w = ev.jxw[q];
        for i in 0..n {
            let gi = ev.grad(q, i);
            let mut s = g[d] * ev.value(q, i);
            for a in 0..d {
                s += fl[a] * gi[a];
            }
            out[i] += w * s;
        }
    }
}

fn load_kernel(ev: &ElementValues, prob: &ProblemDefinition, n: usize) -> [f64; MAX_LOCAL] {
    let mut out = [0.0; MAX_LOCAL];
    for q in 0..ev.n_points() {
        let f = prob.source(&ev.points[q][..prob.d + 1]);
        for (i, o) in out[..n].iter_mut().enumerate() {
            *o += ev.jxw[q] * f * ev.value(q, i);
        }
    }
    out
}

fn jacobian_kernel(ev: &ElementValues, prob: &ProblemDefinition, u: &[f64], time_only: bool, out: &mut LocalMatrix) {
    let d = prob.d;
    let n = u.len();
    for q in 0..ev.n_points() {
        let (_, g) = ev.interpolate(q, u);
        let jf = flux_jacobian(&g[..d], prob.p, prob.eps);
        let w = ev.jxw[q];
        for j in 0..n {
            let gj = ev.grad(q, j);
            let mut a = [0.0; 2];
            if !time_only {
                for r in 0..d {
                    for c in 0..d {
                        a[r] += jf[r][c] * gj[c];
                    }
                }
            }
            for i in 0..n {
                let gi = ev.grad(q, i);
                let mut s = ev.value(q, i) * gj[d];
                for r in 0..d {
                    s += a[r] * gi[r];
                }
                out[i * n + j] += w * s;
            }
        }
    }
}

/// `R_i = int dt u phi_i + flux(grad_x u).grad_x phi_i - f phi_i` for free
/// dofs; constrained entries are zero.
pub fn assemble_residual(space: &Arc<FeSpace>, u: &FeFunction, prob: &ProblemDefinition) -> Result<Vec<f64>> {
    let load = assemble_load(space, prob)?;
    residual_with_load(space, u, prob, &load)
}

/// [`assemble_residual`] with a precomputed load vector.
pub(crate) fn residual_with_load(
    space: &Arc<FeSpace>,
    u: &FeFunction,
    prob: &ProblemDefinition,
    load: &[f64],
) -> Result<Vec<f64>> {
    check_problem(space, prob)?;
    check_function(space, u)?;
    let n = space.n_local();
    let mut r: Vec<f64> = load.iter().map(|x| -x).collect();
    space.map_elements(
        space.residual_order(),
        |ev, e| {
            let mut loc = [0.0; MAX_LOCAL];
            u.local(e, &mut loc[..n]);
            let mut out = [0.0; MAX_LOCAL];
            operator_kernel(ev, prob, &loc[..n], &mut out[..n]);
            out
        },
        |e, out| {
            for (i, &dof) in space.element_dofs(e).iter().enumerate() {
                r[dof] += out[i];
            }
        },
    )?;
    zero_constrained(space, &mut r);
    Ok(r)
}

pub(crate) fn zero_constrained(space: &FeSpace, v: &mut [f64]) {
    for (x, &c) in v.iter_mut().zip(space.constrained_mask()) {
        if c {
            *x = 0.0;
        }
    }
}

fn assemble_matrix(space: &Arc<FeSpace>, u: &FeFunction, prob: &ProblemDefinition, time_only: bool) -> Result<SparseOperator> {
    check_problem(space, prob)?;
    check_function(space, u)?;
    let n = space.n_local();
    let mut k = SparseOperator::zeros(space.sparsity());
    space.map_elements(
        space.residual_order(),
        |ev, e| {
            let mut loc = [0.0; MAX_LOCAL];
            u.local(e, &mut loc[..n]);
            let mut out = [0.0; MAX_LOCAL * MAX_LOCAL];
            jacobian_kernel(ev, prob, &loc[..n], time_only, &mut out);
            out
        },
        |e, out| {
            let dofs = space.element_dofs(e);
            for (i, &di) in dofs.iter().enumerate() {
                for (j, &dj) in dofs.iter().enumerate() {
                    k.add(di, dj, out[i * n + j]);
                }
            }
        },
    )?;
    k.constrain(space.constrained_mask());
    Ok(k)
}

/// Newton matrix `K_ij = A'(u)(phi_j, phi_i)` with identity rows and columns
/// for constrained dofs.
pub fn assemble_jacobian(space: &Arc<FeSpace>, u: &FeFunction, prob: &ProblemDefinition) -> Result<SparseOperator> {
    assemble_matrix(space, u, prob, false)
}

/// The time-derivative part `T_ij = int dt phi_j phi_i` alone, constrained the
/// same way as the Jacobian.
pub fn assemble_time_matrix(space: &Arc<FeSpace>, prob: &ProblemDefinition) -> Result<SparseOperator> {
    assemble_matrix(space, &FeFunction::zeros(space), prob, true)
}

/// `f_i = int f phi_i`, constrained entries zero.
pub fn assemble_load(space: &Arc<FeSpace>, prob: &ProblemDefinition) -> Result<Vec<f64>> {
    check_problem(space, prob)?;
    let n = space.n_local();
    let mut b = vec![0.0; space.n_dofs()];
    space.map_elements(
        space.load_order(),
        |ev, _| load_kernel(ev, prob, n),
        |e, out| {
            for (i, &dof) in space.element_dofs(e).iter().enumerate() {
                b[dof] += out[i];
            }
        },
    )?;
    zero_constrained(space, &mut b);
    Ok(b)
}

/// Element restrictions of `A(u)(w)`; they sum to the global form.
pub fn residual_by_element(
    space: &Arc<FeSpace>,
    prob: &ProblemDefinition,
    u: &FeFunction,
    w: &FeFunction,
) -> Result<Vec<f64>> {
    check_problem(space, prob)?;
    check_function(space, u)?;
    check_function(space, w)?;
    let n = space.n_local();
    let mut out = vec![0.0; space.n_elements()];
    space.map_elements(
        space.residual_order(),
        |ev, e| {
            let (mut ul, mut wl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
            u.local(e, &mut ul[..n]);
            w.local(e, &mut wl[..n]);
            let mut r = [0.0; MAX_LOCAL];
            operator_kernel(ev, prob, &ul[..n], &mut r[..n]);
            (0..n).map(|i| r[i] * wl[i]).sum::<f64>()
        },
        |e, v| out[e] = v,
    )?;
    space.map_elements(
        space.load_order(),
        |ev, e| {
            let mut wl = [0.0; MAX_LOCAL];
            w.local(e, &mut wl[..n]);
            let f = load_kernel(ev, prob, n);
            (0..n).map(|i| f[i] * wl[i]).sum::<f64>()
        },
        |e, v| out[e] -= v,
    )?;
    Ok(out)
}

/// Element restrictions of `A'(u)(v, z)`.
pub fn linearized_by_element(
    space: &Arc<FeSpace>,
    prob: &ProblemDefinition,
    u: &FeFunction,
    v: &FeFunction,
    z: &FeFunction,
) -> Result<Vec<f64>> {
    check_problem(space, prob)?;
    for f in [u, v, z] {
        check_function(space, f)?;
    }
    let n = space.n_local();
    let mut out = vec![0.0; space.n_elements()];
    space.map_elements(
        space.residual_order(),
        |ev, e| {
            let (mut ul, mut vl, mut zl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
            u.local(e, &mut ul[..n]);
            v.local(e, &mut vl[..n]);
            z.local(e, &mut zl[..n]);
            let mut k = [0.0; MAX_LOCAL * MAX_LOCAL];
            jacobian_kernel(ev, prob, &ul[..n], false, &mut k);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += zl[i] * k[i * n + j] * vl[j];
                }
            }
            s
        },
        |e, x| out[e] = x,
    )?;
    Ok(out)
}

/// Local time matrix `T_ij = int_K phi_i dt phi_j` on the simplex with the
/// given vertices (the last coordinate is time).
pub fn local_time_matrix(dim: usize, degree: usize, coords: &[Point]) -> Result<Vec<Vec<f64>>> {
    if coords.len() != dim + 1 {
        return Err(Error::DimensionMismatch(format!("{} vertices for a {dim}-simplex", coords.len())));
    }
    let basis = LagrangeBasis::new(dim, degree);
    let tab = Arc::new(Tabulation::new(basis, quadrature(dim, 2 * degree)?));
    let mut ev = ElementValues::new(dim, tab);
    ev.reinit_geometry(&ElementGeometry::from_vertices(dim, coords));
    let n = basis.n_local();
    let mut t = vec![vec![0.0; n]; n];
    for q in 0..ev.n_points() {
        for (i, row) in t.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += ev.jxw[q] * ev.value(q, i) * ev.grad(q, j)[dim - 1];
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests;
