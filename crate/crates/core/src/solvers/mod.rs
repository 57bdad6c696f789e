//! Linear solvers (GMRES, sparse LU), damped Newton for the primal problem
//! and the transposed linear solve for the discrete adjoint.

mod direct;
mod gmres;

use std::sync::Arc;

use crate::assembly::{assemble_jacobian, assemble_load, residual_with_load, SparseOperator};
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, FeSpace};
use crate::goals::GoalFunctional;
use crate::problem::ProblemDefinition;

pub use direct::DirectSolver;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearSolverKind {
    Gmres,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
    Ilu0,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearSolverConfig {
    pub kind: LinearSolverKind,
    pub gmres_rel_tol: f64,
    pub gmres_max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            kind: LinearSolverKind::Gmres,
            gmres_rel_tol: 1e-8,
            gmres_max_iter: 100,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl LinearSolverConfig {
    pub fn direct() -> Self {
        LinearSolverConfig {
            kind: LinearSolverKind::Direct,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gmres_rel_tol > 0.0) || self.gmres_max_iter == 0 {
            return Err(Error::InvalidArgument("GMRES tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// GMRES iterations; a direct solve counts as one.
    pub iterations: usize,
    pub converged: bool,
    /// GMRES least-squares residual history (empty for direct solves).
    pub residuals: Vec<f64>,
}

fn solve_impl(k: &SparseOperator, b: &[f64], cfg: &LinearSolverConfig, transpose: bool) -> Result<LinearSolution> {
    cfg.validate()?;
    if b.len() != k.n() {
        return Err(Error::DimensionMismatch(format!("rhs of length {} for {} unknowns", b.len(), k.n())));
    }
    if b.iter().all(|&x| x == 0.0) {
        return Ok(LinearSolution {
            x: vec![0.0; b.len()],
            iterations: 0,
            converged: true,
            residuals: vec![0.0],
        });
    }
    match cfg.kind {
        LinearSolverKind::Direct => {
            let lu = DirectSolver::factor(k)?;
            let x = if transpose { lu.solve_transpose(b)? } else { lu.solve(b)? };
            Ok(LinearSolution {
                x,
                iterations: 1,
                converged: true,
                residuals: Vec::new(),
            })
        }
        LinearSolverKind::Gmres => {
            let kt;
            let op = if transpose {
                kt = k.transpose();
                &kt
            } else {
                k
            };
            let m = gmres::Precond::build(op, cfg.preconditioner)?;
            let out = gmres::gmres(op, &m, b, cfg.gmres_rel_tol, cfg.gmres_max_iter)?;
            Ok(LinearSolution {
                x: out.x,
                iterations: out.iterations,
                converged: out.converged,
                residuals: out.residuals,
            })
        }
    }
}

/// Solves `K x = b`. GMRES stops at `|b - Kx| <= tol |b|` or at the
/// iteration cap, in which case `converged` is false.
pub fn linear_solve(k: &SparseOperator, b: &[f64], cfg: &LinearSolverConfig) -> Result<LinearSolution> {
    solve_impl(k, b, cfg, false)
}

/// Solves `K^T x = b`.
pub fn linear_solve_transpose(k: &SparseOperator, b: &[f64], cfg: &LinearSolverConfig) -> Result<LinearSolution> {
    solve_impl(k, b, cfg, true)
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_line_search_steps: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_iter: 50,
            max_line_search_steps: 30,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub newton_iters: usize,
    pub total_inner_iters: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// False if any inner GMRES solve hit its iteration cap.
    pub inner_converged: bool,
    pub line_search_failed: bool,
    /// Residual norm before the first and after every accepted step.
    pub residual_history: Vec<f64>,
    /// Damping factor of every accepted step.
    pub damping: Vec<f64>,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration with halving line search. The first damping
/// factor that decreases the residual norm is accepted.
pub fn newton_solve(
    prob: &ProblemDefinition,
    space: &Arc<FeSpace>,
    init: &FeFunction,
    ncfg: &NewtonConfig,
    lcfg: &LinearSolverConfig,
) -> Result<(FeFunction, SolveStats)> {
    if !(ncfg.abs_tol > 0.0 && ncfg.rel_tol > 0.0) || ncfg.max_iter == 0 {
        return Err(Error::InvalidArgument("Newton tolerances must be positive and max_iter >= 1".into()));
    }
    let mut u = init.clone();
    u.zero_constrained();
    let load = assemble_load(space, prob)?;
    let mut r = residual_with_load(space, &u, prob, &load)?;
    let mut rn = norm(&r);
    let target = ncfg.abs_tol.max(ncfg.rel_tol * rn);
    let mut stats = SolveStats {
        inner_converged: true,
        residual_history: vec![rn],
        ..Default::default()
    };
    while rn > target {
        if stats.newton_iters >= ncfg.max_iter {
            break;
        }
        let k = assemble_jacobian(space, &u, prob)?;
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let sol = linear_solve(&k, &rhs, lcfg)?;
        stats.total_inner_iters += sol.iterations;
        stats.inner_converged &= sol.converged;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=ncfg.max_line_search_steps {
            let coeffs: Vec<f64> = u.coeffs.iter().zip(&sol.x).map(|(a, w)| a + lambda * w).collect();
            let trial = FeFunction::from_coeffs(space, coeffs)?;
            let tr = residual_with_load(space, &trial, prob, &load)?;
            let tn = norm(&tr);
            if tn < rn {
                accepted = Some((trial, tr, tn));
                break;
            }
            lambda *= 0.5;
        }
        stats.newton_iters += 1;
        match accepted {
            Some((trial, tr, tn)) => {
                u = trial;
                r = tr;
                rn = tn;
                stats.residual_history.push(rn);
                stats.damping.push(lambda);
            }
            None => {
                stats.line_search_failed = true;
                break;
            }
        }
    }
    stats.final_residual_norm = rn;
    stats.converged = rn <= target;
    Ok((u, stats))
}

/// Discrete adjoint: `K(u_h)^T z = g` with `g_i = J'(u_h)(phi_i)`.
pub fn solve_adjoint(
    prob: &ProblemDefinition,
    space: &Arc<FeSpace>,
    u: &FeFunction,
    goal: &GoalFunctional,
    lcfg: &LinearSolverConfig,
) -> Result<(FeFunction, LinearSolution)> {
    let g = goal.gradient(space, u)?;
    let k = assemble_jacobian(space, u, prob)?;
    let sol = linear_solve_transpose(&k, &g, lcfg)?;
    let mut z = FeFunction::from_coeffs(space, sol.x.clone())?;
    z.zero_constrained();
    Ok((z, sol))
}

#[cfg(test)]
mod tests;
